fn main() {
    std::process::exit(roughkit::run(std::env::args_os()));
}
