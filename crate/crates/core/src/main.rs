fn main() {
    std::process::exit(support_recovery::cli::run(std::env::args_os()));
}
