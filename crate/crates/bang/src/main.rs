fn main() {
    std::process::exit(bang::cli::run());
}
