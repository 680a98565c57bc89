fn main() {
    std::process::exit(dimlab::run(std::env::args_os()));
}
