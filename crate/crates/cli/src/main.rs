mod args;
mod commands;
mod failure;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, DataCommand, EvalCommand, FileConfig, ModelCommand, PostCommand, RhythmCommand};

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Rhythm(RhythmCommand::Extract(a)) => commands::rhythm::extract(a.merged(&file.rhythm_extract), seed),
        Command::Eval(EvalCommand::Rhythm(a)) => commands::eval::rhythm(a.merged(&file.eval_rhythm), seed),
        Command::Post(PostCommand::Apply(a)) => commands::post::apply(a.merged(&file.post_apply), seed),
        Command::Data(DataCommand::Build(a)) => commands::data::build(a.merged(&file.data_build), seed),
        Command::Data(DataCommand::Regen(a)) => commands::data::regen(a.merged(&file.data_regen), seed),
        Command::Model(ModelCommand::Train(a)) => commands::model::train(a.merged(&file.model_train), seed),
        Command::Model(ModelCommand::Generate(a)) => commands::model::generate(a.merged(&file.model_generate), seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure::exit_code(&e))
        }
    }
}
