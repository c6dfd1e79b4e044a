fn main() {
    std::process::exit(edffluid::cli::main_with_args(std::env::args_os()));
}
