use clap::error::ErrorKind;

use miniconvnet::cli::{parse_cli, run};
use miniconvnet::parallel::{threads_from_env, with_threads};

fn main() {
    let cli = match parse_cli(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = with_threads(threads_from_env(), || run(cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
