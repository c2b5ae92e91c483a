fn main() {
    std::process::exit(mvopt::cli::main(std::env::args_os()));
}
