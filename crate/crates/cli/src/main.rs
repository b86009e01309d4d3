fn main() {
    std::process::exit(ccl_cli::dispatch(std::env::args_os()));
}
