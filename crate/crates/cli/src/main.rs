fn main() {
    std::process::exit(despeckle_cli::cli_main(std::env::args_os()));
}
