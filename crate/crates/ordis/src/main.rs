fn main() {
    std::process::exit(ordis::cli::run(std::env::args_os()));
}
