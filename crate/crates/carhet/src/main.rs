fn main() {
    std::process::exit(carhet::cli::run());
}
