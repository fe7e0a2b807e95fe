fn main() -> std::process::ExitCode {
    trajsoc::cli::run(std::env::args_os())
}
