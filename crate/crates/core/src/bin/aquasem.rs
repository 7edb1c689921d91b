fn main() {
    std::process::exit(aquasem::cli::main());
}
