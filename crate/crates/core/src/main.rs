fn main() {
    std::process::exit(robust_consensus::cli::run(std::env::args_os()));
}
