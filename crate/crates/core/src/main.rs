fn main() {
    std::process::exit(ijgp::cli::run(std::env::args_os()));
}
