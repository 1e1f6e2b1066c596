fn main() {
    std::process::exit(pencil_core::cli::run(std::env::args_os()));
}
