fn main() {
    std::process::exit(tonsim::cli::main_with_args(std::env::args_os()));
}
