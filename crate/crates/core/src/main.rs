fn main() {
    std::process::exit(toric_sim::cli::run());
}
