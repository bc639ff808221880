fn main() {
    std::process::exit(semland::cli::dispatch(std::env::args_os()));
}
