fn main() {
    std::process::exit(fedsgt_cli::run(std::env::args_os()));
}
