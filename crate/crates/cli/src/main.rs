fn main() {
    std::process::exit(stl_cli::run(std::env::args_os()));
}
