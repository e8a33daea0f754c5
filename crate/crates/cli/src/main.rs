mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};


/// Record statistics of random walks, AR/GARCH processes and price panels.
#[derive(Debug, Parser)]
#[command(name = "recstats", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo record statistics of a simulated process.
    Simulate(commands::simulate::Args),
    /// Tabulate closed-form and asymptotic formulas.
    Formulas(commands::formulas::Args),
    /// Record analysis of a CSV price panel.
    Analyze(commands::analyze::Args),
    /// Maximum-likelihood AR(1)-GARCH(1,1) fit.
    Fit(commands::fit::Args),
    /// Records of the maximum of N walkers or stocks.
    Ensemble(commands::ensemble::Args),
    /// First-passage times and survival probabilities.
    Fpt(commands::fpt::Args),
    /// Record counts per weekday.
    Weekly(commands::weekly::Args),
}

fn invocation() -> String {
    let mut parts = vec!["recstats".to_string()];
    for a in std::env::args().skip(1) {
        if a.is_empty() || a.contains(|c: char| c.is_whitespace() || c == '\'' || c == '"') {
            parts.push(format!("'{}'", a.replace('\'', r"'\''")));
        } else {
            parts.push(a);
        }
    }
    parts.join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let inv = invocation();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate::run(a, &inv),
        Command::Formulas(a) => commands::formulas::run(a, &inv),
        Command::Analyze(a) => commands::analyze::run(a, &inv),
        Command::Fit(a) => commands::fit::run(a, &inv),
        Command::Ensemble(a) => commands::ensemble::run(a, &inv),
        Command::Fpt(a) => commands::fpt::run(a, &inv),
        Command::Weekly(a) => commands::weekly::run(a, &inv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_documented_invocations() {
        let c = Cli::try_parse_from(["recstats", "formulas", "--rw", "--n-max", "100"]).unwrap();
        assert!(matches!(c.command, Command::Formulas(_)));
        let c = Cli::try_parse_from([
            "recstats", "simulate", "--process", "ar1", "--alpha", "0.99", "--n", "250", "--replicas", "100000",
            "--seed", "7",
        ])
        .unwrap();
        assert!(matches!(c.command, Command::Simulate(_)));
        assert!(Cli::try_parse_from(["recstats", "simulate", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["recstats", "formulas", "--rw", "--iid"]).is_err());
    }
}
