fn main() {
    std::process::exit(hotflip::cli::main());
}
