fn main() {
    std::process::exit(hullguard::cli::main(std::env::args_os()));
}
