fn main() {
    std::process::exit(recurvis::cli::run(std::env::args_os()));
}
