fn main() {
    std::process::exit(fractal_lq::cli::run(std::env::args_os()));
}
