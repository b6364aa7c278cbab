fn main() {
    std::process::exit(fppi::cli::run(std::env::args_os()));
}
