fn main() {
    std::process::exit(plagdet_cli::run(std::env::args_os()));
}
