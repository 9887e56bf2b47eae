fn main() {
    std::process::exit(slideqc::cli::main_with(std::env::args_os()));
}
