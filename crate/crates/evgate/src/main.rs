use std::process::ExitCode;

fn main() -> ExitCode {
    match evgate::cli::run(std::env::args()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evgate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
