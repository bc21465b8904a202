fn main() {
    std::process::exit(uckl::cli::run(std::env::args_os()));
}
