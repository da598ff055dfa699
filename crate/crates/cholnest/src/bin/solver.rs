fn main() {
    std::process::exit(cholnest::cli::main_with(std::env::args_os()));
}
