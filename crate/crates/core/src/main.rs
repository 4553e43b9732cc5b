fn main() -> std::process::ExitCode {
    w1test::cli::main_with_args(std::env::args_os())
}
