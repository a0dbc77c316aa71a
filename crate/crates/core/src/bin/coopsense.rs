fn main() {
    std::process::exit(coopsense::cli::main_with(std::env::args_os()));
}
