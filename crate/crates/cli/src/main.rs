fn main() {
    std::process::exit(softgrad_cli::main_with(std::env::args_os()));
}
