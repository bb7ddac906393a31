fn main() {
    std::process::exit(bno_cli::run());
}
