fn main() {
    std::process::exit(probekit::cli::run(std::env::args_os()));
}
