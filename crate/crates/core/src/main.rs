fn main() {
    std::process::exit(pulse_period::cli::run(std::env::args_os()));
}
