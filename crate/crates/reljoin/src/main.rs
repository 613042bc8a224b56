fn main() {
    std::process::exit(reljoin::cli::main());
}
