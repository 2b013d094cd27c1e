fn main() {
    std::process::exit(meltsim::cli::main(std::env::args_os()));
}
