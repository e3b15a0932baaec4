fn main() {
    std::process::exit(shflab_cli::run(std::env::args_os()));
}
