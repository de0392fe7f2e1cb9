fn main() {
    std::process::exit(ids_chan::cli::main_with_args(std::env::args_os()));
}
