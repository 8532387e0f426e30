fn main() {
    std::process::exit(ebnm::cli::run(std::env::args_os()));
}
