fn main() {
    std::process::exit(micropol_cli::main_with(std::env::args_os()));
}
