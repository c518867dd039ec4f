fn main() {
    std::process::exit(fermilab::harness::cli::main_with(std::env::args_os()));
}
