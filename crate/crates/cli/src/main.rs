fn main() {
    std::process::exit(strokelab_cli::main_with(std::env::args_os()));
}
