fn main() {
    std::process::exit(vpk_cli::run(std::env::args_os()));
}
