fn main() {
    std::process::exit(faircocco::cli::main_with_args(std::env::args_os()));
}
