use std::process::ExitCode;

use clap::{Parser, Subcommand};
use guikit::pipeline::{
    cmd_eval, cmd_gen_level1, cmd_gen_level2, cmd_gen_level3, cmd_pack, cmd_validate, ConfigOverrides, PipelineConfig,
    PipelineError, Stats,
};

/// GUI grounding and navigation data tooling.
#[derive(Parser)]
#[command(name = "guikit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check snapshot files against the schema.
    CollectValidate(ConfigOverrides),
    /// Grounding samples (text2bbox, bbox2text, bbox2dom) from snapshots.
    GenLevel1(ConfigOverrides),
    /// Function descriptions and function2bbox samples from snapshots.
    GenLevel2(ConfigOverrides),
    /// Judge trajectory steps and build navigation samples.
    GenLevel3(ConfigOverrides),
    /// Re-pack samples under a token budget.
    Pack(ConfigOverrides),
    /// Score predictions against gold steps.
    Eval(ConfigOverrides),
}

type Stage = fn(&PipelineConfig) -> Result<Stats, PipelineError>;

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (overrides, stage): (&ConfigOverrides, Stage) = match &cli.command {
        Command::CollectValidate(o) => (o, cmd_validate),
        Command::GenLevel1(o) => (o, cmd_gen_level1),
        Command::GenLevel2(o) => (o, cmd_gen_level2),
        Command::GenLevel3(o) => (o, cmd_gen_level3),
        Command::Pack(o) => (o, cmd_pack),
        Command::Eval(o) => {
            let report = cmd_eval(&PipelineConfig::resolve(o)?)?;
            print!("{}", report.table());
            return Ok(());
        }
    };
    let stats = stage(&PipelineConfig::resolve(overrides)?)?;
    eprintln!("{stats}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
