fn main() {
    std::process::exit(wsdiag_cli::main_with(std::env::args_os()));
}
