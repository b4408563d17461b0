use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    let code = oscta::cli::main_with(
        std::env::args_os(),
        &mut oscta::cli::Io {
            out: &mut out,
            err: &mut err,
        },
    );
    let _ = out.flush();
    std::process::exit(code);
}
