fn main() {
    std::process::exit(rrn_cli::run(std::env::args_os()));
}
