fn main() {
    std::process::exit(deepcity::cli::main_with_args(std::env::args_os()));
}
