fn main() {
    std::process::exit(mgnc::cli::main(std::env::args_os()));
}
