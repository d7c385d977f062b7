fn main() {
    std::process::exit(neuroencode_cli::run(std::env::args_os()));
}
