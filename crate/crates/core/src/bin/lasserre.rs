fn main() {
    std::process::exit(lasserre::cli::main());
}
