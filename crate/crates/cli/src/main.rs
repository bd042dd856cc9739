fn main() {
    std::process::exit(vaelab_cli::dispatch(std::env::args_os()));
}
