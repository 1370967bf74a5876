fn main() {
    std::process::exit(faas_observe::cli::main_with_args(std::env::args_os()));
}
