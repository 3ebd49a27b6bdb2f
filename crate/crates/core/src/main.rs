fn main() {
    std::process::exit(ehcoop::cli::run(std::env::args_os()));
}
