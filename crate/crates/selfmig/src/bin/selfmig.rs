fn main() {
    std::process::exit(selfmig::cli::main_with(std::env::args_os()));
}
