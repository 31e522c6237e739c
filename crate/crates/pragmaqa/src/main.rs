fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = pragmaqa::cli::run(
        std::env::args_os(),
        pragmaqa::cli::Io {
            stdin: &mut std::io::stdin(),
            stdout: &mut std::io::stdout(),
            stderr: &mut std::io::stderr(),
        },
    );
    std::process::exit(code);
}
