fn main() {
    std::process::exit(hcc::cli::main_with_args(std::env::args_os()));
}
