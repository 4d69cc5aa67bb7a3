fn main() {
    std::process::exit(tcdtrack::cli::run());
}
