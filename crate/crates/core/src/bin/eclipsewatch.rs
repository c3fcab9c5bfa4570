fn main() {
    std::process::exit(eclipsewatch::cli::run(std::env::args_os()));
}
