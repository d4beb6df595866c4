fn main() {
    std::process::exit(spatialprompt_cli::run(std::env::args_os()));
}
