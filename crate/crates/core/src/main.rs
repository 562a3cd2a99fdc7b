fn main() {
    std::process::exit(hicov::cli::run(std::env::args_os()));
}
