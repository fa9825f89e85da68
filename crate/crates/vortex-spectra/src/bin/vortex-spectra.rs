fn main() {
    std::process::exit(vortex_spectra::cli::main_with_args(std::env::args_os()));
}
