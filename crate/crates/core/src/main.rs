fn main() {
    std::process::exit(feshbach_dyn::cli::main());
}
