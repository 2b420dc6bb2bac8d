fn main() {
    std::process::exit(scalingnet_cli::main_with_args(std::env::args_os()));
}
