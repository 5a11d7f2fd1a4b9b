fn main() {
    std::process::exit(trilex_cli::run(std::env::args_os()));
}
