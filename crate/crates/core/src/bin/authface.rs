fn main() {
    std::process::exit(authface::cli::run(std::env::args_os()));
}
