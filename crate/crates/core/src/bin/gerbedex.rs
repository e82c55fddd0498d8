fn main() {
    std::process::exit(gerbedex::cli::run(std::env::args_os()));
}
