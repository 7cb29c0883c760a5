fn main() {
    std::process::exit(ormul::cli::run(std::env::args_os()));
}
