fn main() {
    std::process::exit(qfc_sim::cli::main_with_args(std::env::args_os()));
}
