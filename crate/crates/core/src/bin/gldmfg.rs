fn main() {
    std::process::exit(gldmfg::cli::run_command(std::env::args_os()));
}
