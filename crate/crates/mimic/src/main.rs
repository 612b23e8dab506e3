fn main() {
    std::process::exit(mimic::cli::run_command(std::env::args_os()));
}
