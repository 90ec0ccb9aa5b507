fn main() {
    std::process::exit(kvevict::cli::main(std::env::args_os()));
}
