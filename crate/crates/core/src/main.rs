fn main() {
    std::process::exit(contactmech::cli::main_with(std::env::args()));
}
