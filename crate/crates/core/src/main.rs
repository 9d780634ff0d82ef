fn main() {
    std::process::exit(mocomplete::cli::main());
}
