fn main() -> std::process::ExitCode {
    orderseg::cli::run(std::env::args_os())
}
