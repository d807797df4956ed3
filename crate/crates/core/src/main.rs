fn main() {
    std::process::exit(qspike::cli::main_with_args(std::env::args_os()));
}
