fn main() {
    std::process::exit(sasrate::cli::run(std::env::args_os()));
}
