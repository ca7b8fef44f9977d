fn main() {
    std::process::exit(infochess::cli::run(std::env::args_os()));
}
