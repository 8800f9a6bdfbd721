fn main() {
    std::process::exit(fusformer_cli::run(std::env::args_os()));
}
