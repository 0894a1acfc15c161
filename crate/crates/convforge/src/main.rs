fn main() {
    std::process::exit(convforge::cli::run(std::env::args_os()));
}
