fn main() {
    std::process::exit(hgrl::cli::main_with(std::env::args_os()));
}
