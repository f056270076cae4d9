use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    if let Err(e) = report_labeler::configure_threads() {
        let _ = writeln!(stderr.lock(), "error: {e}");
        std::process::exit(e.status() as i32);
    }
    let code = report_labeler::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code);
}
