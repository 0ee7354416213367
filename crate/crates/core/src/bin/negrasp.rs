fn main() {
    std::process::exit(negrasp::cli::run(std::env::args_os()));
}
