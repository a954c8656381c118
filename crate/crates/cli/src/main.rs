fn main() {
    std::process::exit(tirtone_cli::run(std::env::args_os()));
}
