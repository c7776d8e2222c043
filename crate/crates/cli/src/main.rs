fn main() {
    std::process::exit(scenforge_cli::main_with_args(std::env::args_os()));
}
