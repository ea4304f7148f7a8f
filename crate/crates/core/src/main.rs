fn main() {
    std::process::exit(horen::cli::run(std::env::args_os()));
}
