fn main() {
    bap_cli::init_logging();
    std::process::exit(bap_cli::main_with(std::env::args_os()));
}
