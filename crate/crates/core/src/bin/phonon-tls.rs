use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    phonon_tls::cli::main()
}
