fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(erdecay_cli::cli_main(&args));
}
