fn main() {
    std::process::exit(adaptube::cli::main_with_args(std::env::args_os()));
}
