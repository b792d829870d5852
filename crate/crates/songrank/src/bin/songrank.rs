fn main() {
    std::process::exit(songrank::cli::run(std::env::args_os()));
}
