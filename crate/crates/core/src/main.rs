fn main() {
    std::process::exit(concept_erasure::cli::run(std::env::args_os()));
}
