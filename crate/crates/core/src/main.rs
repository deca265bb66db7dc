fn main() {
    std::process::exit(bgpc::cli::run(std::env::args_os()));
}
