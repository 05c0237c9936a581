fn main() {
    std::process::exit(abdkit_server::cli::run(std::env::args_os()));
}
