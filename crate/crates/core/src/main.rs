fn main() {
    std::process::exit(irgraph::cli::run(std::env::args_os()));
}
