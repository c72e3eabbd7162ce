fn main() {
    std::process::exit(hydrosched_cli::main_with_args(std::env::args_os()));
}
