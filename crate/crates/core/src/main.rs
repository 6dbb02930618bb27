fn main() {
    std::process::exit(tifc_sim::cli::main_with(std::env::args_os()));
}
