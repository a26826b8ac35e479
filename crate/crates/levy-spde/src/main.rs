fn main() {
    std::process::exit(levy_spde::experiment::run_cli(std::env::args_os()));
}
