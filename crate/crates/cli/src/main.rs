fn main() {
    std::process::exit(pvb_cli::run(std::env::args_os()));
}
