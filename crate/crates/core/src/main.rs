fn main() {
    std::process::exit(selfcal::cli::run(std::env::args_os()));
}
