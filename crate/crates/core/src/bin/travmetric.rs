fn main() {
    std::process::exit(travmetric::cli::main_entry());
}
