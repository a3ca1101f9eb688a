fn main() {
    std::process::exit(vscsim::cli::main_with_args(std::env::args_os()));
}
