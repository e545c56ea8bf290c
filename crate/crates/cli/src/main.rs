fn main() {
    std::process::exit(radgen::run(std::env::args().skip(1).collect()));
}
