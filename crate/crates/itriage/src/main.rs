fn main() {
    std::process::exit(itriage::cli::main_with_args(std::env::args_os()));
}
