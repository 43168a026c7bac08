fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(entsim_cli::main_with(std::env::args_os()))
}
