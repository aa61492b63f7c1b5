fn main() {
    std::process::exit(pcbls::cli::run(std::env::args_os()));
}
