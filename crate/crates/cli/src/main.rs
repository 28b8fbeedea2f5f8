use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crftk_cli::{
    agree, eval, read_file, tag, train, write_file, CliError, EvalOptions, Format, TrainOptions,
};
use crftk_core::{load_model, save_model, KappaMode, ModelKind};

#[derive(Parser)]
#[command(
    name = "crftk",
    version,
    about = "Train, apply and evaluate conditional random fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on labeled data and write it to a file.
    Train(TrainArgs),
    /// Append predicted labels to every line of a data file.
    Tag {
        data: String,
        #[arg(short, long)]
        model: String,
        /// Write to this file instead of standard output.
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Score predicted labels against gold labels.
    Eval {
        gold: String,
        pred: String,
        #[arg(long, value_enum, default_value = "chain")]
        format: FormatArg,
        #[arg(long, default_value = "NON")]
        background: String,
        #[arg(long, requires = "neg")]
        pos: Option<String>,
        #[arg(long, requires = "pos")]
        neg: Option<String>,
    },
    /// Chance-corrected agreement between two span annotations.
    Agree {
        ann1: String,
        ann2: String,
        /// Number of tokens in the annotated text.
        #[arg(long)]
        size: usize,
        #[arg(long, value_enum, default_value = "binary")]
        mode: ModeArg,
    },
}

#[derive(Args)]
struct TrainArgs {
    data: String,
    #[arg(short, long)]
    model: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Input format; implied by the model kind.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 10)]
    max_seg_len: usize,
    #[arg(long)]
    length_features: bool,
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    #[arg(long, default_value_t = 0.01)]
    l2: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "NON")]
    background: String,
    /// Regularization for the latent kinds.
    #[arg(long, default_value_t = 1e-3)]
    reg: f64,
    /// Initial step size for the latent kinds.
    #[arg(long)]
    eta0: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Chain1,
    #[value(name = "chainK", alias = "chaink")]
    ChainK,
    Semimarkov,
    Tree,
    Latent,
    Latentmarg,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Chain1 => ModelKind::Chain1,
            KindArg::ChainK => ModelKind::ChainK,
            KindArg::Semimarkov => ModelKind::SemiMarkov,
            KindArg::Tree => ModelKind::Tree,
            KindArg::Latent => ModelKind::Latent,
            KindArg::Latentmarg => ModelKind::LatentMarg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Chain,
    Tree,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Chain => Format::Chain,
            FormatArg::Tree => Format::Tree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Binary,
    Proportional,
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let kind = ModelKind::from(args.kind);
    if let Some(format) = args.format {
        let implied = if kind.is_tree() {
            Format::Tree
        } else {
            Format::Chain
        };
        if Format::from(format) != implied {
            return Err(CliError::Usage(format!(
                "model kind {kind} does not read {:?} files",
                Format::from(format)
            )));
        }
    }
    let options = TrainOptions {
        kind,
        order: args.order,
        max_seg_len: args.max_seg_len,
        length_features: args.length_features,
        l1: args.l1,
        l2: args.l2,
        epochs: args.epochs,
        tol: args.tol,
        min_count: args.min_count,
        seed: args.seed,
        background: args.background,
        reg: args.reg,
        eta0: args.eta0,
    };
    let outcome = train(&read_file(&args.data)?, &args.data, &options)?;
    write_file(&args.model, &save_model(&outcome.model)?)?;
    eprintln!(
        "objective {} after {} epochs",
        outcome.objective, outcome.epochs
    );
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => run_train(args),
        Command::Tag {
            data,
            model,
            output,
        } => {
            let model = load_model(&read_file(&model)?)?;
            let tagged = tag(&model, &read_file(&data)?, &data)?;
            match output {
                Some(path) => write_file(&path, &tagged),
                None => {
                    print!("{tagged}");
                    Ok(())
                }
            }
        }
        Command::Eval {
            gold,
            pred,
            format,
            background,
            pos,
            neg,
        } => {
            let options = EvalOptions {
                format: format.into(),
                background,
                polarity: pos.zip(neg),
            };
            print!(
                "{}",
                eval(
                    &read_file(&gold)?,
                    &gold,
                    &read_file(&pred)?,
                    &pred,
                    &options
                )?
            );
            Ok(())
        }
        Command::Agree {
            ann1,
            ann2,
            size,
            mode,
        } => {
            let mode = match mode {
                ModeArg::Binary => KappaMode::Binary,
                ModeArg::Proportional => KappaMode::Proportional,
            };
            print!(
                "{}",
                agree(
                    &read_file(&ann1)?,
                    &ann1,
                    &read_file(&ann2)?,
                    &ann2,
                    size,
                    mode
                )?
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
