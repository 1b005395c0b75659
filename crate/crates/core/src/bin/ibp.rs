fn main() {
    std::process::exit(ibp::app::cli::main_with_args(std::env::args_os()));
}
