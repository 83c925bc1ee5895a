fn main() {
    std::process::exit(photon_exchange::cli::main_with_args(std::env::args_os()));
}
