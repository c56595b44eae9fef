fn main() {
    std::process::exit(exposure_lens::cli::run(std::env::args_os()));
}
