fn main() {
    env_logger::init();
    std::process::exit(vpquant::bench::cli::cli_main(std::env::args_os()));
}
