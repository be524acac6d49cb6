fn main() {
    std::process::exit(soss::cli::run(std::env::args_os()));
}
