fn main() -> std::process::ExitCode {
    mintl::cli::run(std::env::args_os())
}
