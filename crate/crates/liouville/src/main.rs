fn main() {
    std::process::exit(liouville::cli::run(std::env::args_os()));
}
