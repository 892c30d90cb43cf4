fn main() {
    std::process::exit(fairdraw::cli::run(std::env::args_os()));
}
