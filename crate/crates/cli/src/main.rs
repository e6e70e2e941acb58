fn main() {
    std::process::exit(pmbench_cli::main_with(std::env::args_os()));
}
