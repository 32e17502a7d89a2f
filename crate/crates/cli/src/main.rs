fn main() {
    std::process::exit(carbon_cli::run(std::env::args_os()));
}
