fn main() {
    std::process::exit(rigidframes::cli::run(std::env::args_os()));
}
