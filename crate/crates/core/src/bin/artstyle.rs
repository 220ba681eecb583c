fn main() {
    std::process::exit(artstyle::cli::run(std::env::args_os()));
}
