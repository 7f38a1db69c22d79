fn main() {
    std::process::exit(virtimu::cli::main_args(std::env::args_os()));
}
