fn main() {
    std::process::exit(neuroadapt_cli::run(std::env::args_os()));
}
