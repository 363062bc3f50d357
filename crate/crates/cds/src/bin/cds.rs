fn main() {
    std::process::exit(cds::cli::run(std::env::args_os()));
}
