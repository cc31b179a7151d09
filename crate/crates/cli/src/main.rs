fn main() {
    std::process::exit(droopsim_cli::run_cli());
}
