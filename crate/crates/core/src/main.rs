fn main() {
    std::process::exit(nhdp::cli::main());
}
