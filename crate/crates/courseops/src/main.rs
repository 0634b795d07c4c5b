use std::process::ExitCode;

use clap::Parser;
use courseops::api::system_clock;
use courseops::cli::{self, Cli, CliError, Command, EXIT_ERROR};
use courseops::server::{shutdown_signal, Server};

fn serve(cli: &Cli, args: &cli::ServeArgs) -> Result<(), CliError> {
    let mut config = cli::load_config(cli)?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = dir.clone();
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
    runtime.block_on(async {
        let server = Server::bind(config, system_clock()).await.map_err(|e| CliError::new("startup", e.to_string()))?;
        server.run(shutdown_signal()).await.map_err(|e| CliError::new("server", e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let result = match &cli.command {
        Command::Serve(args) => serve(&cli, args).map(|()| None),
        command => cli::load_config(&cli).and_then(|config| cli::run(command, &config, cli::local_today())).map(Some),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(out)) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                println!("{}", e.to_json());
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(u8::try_from(e.code).unwrap_or(EXIT_ERROR as u8))
        }
    }
}
