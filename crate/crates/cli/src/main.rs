fn main() {
    std::process::exit(surfspin_cli::run(std::env::args_os()));
}
