fn main() {
    std::process::exit(marsdrop_cli::run(std::env::args_os()));
}
