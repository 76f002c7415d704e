fn main() {
    std::process::exit(flexalloc::cli::main_with_args(std::env::args_os()));
}
