fn main() {
    std::process::exit(emgtask::cli::main_with(std::env::args_os()));
}
