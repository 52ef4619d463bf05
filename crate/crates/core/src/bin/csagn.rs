fn main() {
    std::process::exit(csagn::cli::run(std::env::args()));
}
