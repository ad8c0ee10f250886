fn main() {
    std::process::exit(fpt::cli::run(std::env::args_os()));
}
