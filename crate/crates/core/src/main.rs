fn main() {
    std::process::exit(coolish::cli::run(std::env::args_os()));
}
