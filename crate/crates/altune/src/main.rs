fn main() {
    std::process::exit(altune::cli::main_with_args(std::env::args_os()));
}
