fn main() {
    std::process::exit(hartree_lab::cli::run());
}
