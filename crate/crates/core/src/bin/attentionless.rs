fn main() {
    std::process::exit(attentionless::cli::main_with_args(std::env::args_os()));
}
