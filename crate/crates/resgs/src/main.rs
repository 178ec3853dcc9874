fn main() {
    std::process::exit(resgs::cli::run(std::env::args_os()));
}
