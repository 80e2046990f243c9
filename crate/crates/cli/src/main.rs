fn main() {
    std::process::exit(dastgcn_cli::run(std::env::args_os()));
}
