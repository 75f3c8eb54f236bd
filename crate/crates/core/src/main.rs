fn main() {
    std::process::exit(ff_trainer::cli::run(std::env::args_os()));
}
