fn main() {
    std::process::exit(atars::cli::main());
}
