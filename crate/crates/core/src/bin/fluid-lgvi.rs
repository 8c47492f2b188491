fn main() {
    std::process::exit(fluid_lgvi::cli::main());
}
