fn main() {
    std::process::exit(cropcast::cli::main_with_args(std::env::args_os()));
}
