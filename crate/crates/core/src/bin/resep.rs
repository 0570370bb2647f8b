fn main() {
    std::process::exit(resepformer::cli::main_with_args(std::env::args_os()));
}
