fn main() {
    std::process::exit(mcdepth::cli::main_with_args(std::env::args_os()));
}
