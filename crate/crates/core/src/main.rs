fn main() {
    std::process::exit(secam::cli::run(std::env::args_os()));
}
