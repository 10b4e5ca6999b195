fn main() {
    std::process::exit(epurify::cli::run(std::env::args_os()));
}
