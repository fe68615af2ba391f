fn main() {
    std::process::exit(relcov::cli::run(std::env::args_os()));
}
