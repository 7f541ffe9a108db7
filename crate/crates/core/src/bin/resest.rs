fn main() {
    std::process::exit(resest::cli::run(std::env::args_os()));
}
