fn main() {
    std::process::exit(cgthermo::cli::main_with_args(std::env::args_os()));
}
