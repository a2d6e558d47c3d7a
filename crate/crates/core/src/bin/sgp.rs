fn main() {
    std::process::exit(sgp::cli::run(std::env::args_os()));
}
