fn main() {
    std::process::exit(lafte_cli::run(std::env::args_os()));
}
