fn main() {
    std::process::exit(memtrack::cli::run(std::env::args_os()));
}
