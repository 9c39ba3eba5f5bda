fn main() {
    std::process::exit(neural_rld::cli::main_with_args(std::env::args_os()));
}
