fn main() {
    std::process::exit(orbitq_cli::run_cli(std::env::args_os()));
}
