use std::io::{self, Write};
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let code = dualconsult::harness::cli::run(std::env::args_os(), &mut input, &mut out);
    let _ = out.flush();
    ExitCode::from(code.clamp(0, 255) as u8)
}
