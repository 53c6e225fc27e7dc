fn main() {
    std::process::exit(rcec::cli::run(std::env::args_os()));
}
