fn main() {
    std::process::exit(nice_cli::run(std::env::args_os()));
}
