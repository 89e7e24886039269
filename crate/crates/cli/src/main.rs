fn main() {
    std::process::exit(lieruin_cli::run(std::env::args_os()));
}
