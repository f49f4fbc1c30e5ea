fn main() {
    std::process::exit(slowfast::cli::run(std::env::args_os()));
}
