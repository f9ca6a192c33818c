fn main() {
    std::process::exit(hlweave::cli::run());
}
