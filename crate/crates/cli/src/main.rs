fn main() {
    std::process::exit(boundex_cli::cli::main());
}
