fn main() {
    std::process::exit(kraft::cli::main_with_args(std::env::args_os()));
}
