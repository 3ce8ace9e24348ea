fn main() {
    std::process::exit(miest::cli::run(std::env::args_os()));
}
