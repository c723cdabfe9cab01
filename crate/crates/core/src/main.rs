fn main() {
    std::process::exit(rare::cli::main());
}
