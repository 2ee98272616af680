mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hofscan_core::evalkit::{EvalError, ReportFormat};
use hofscan_core::features::FeatureSet;
use hofscan_core::model::ModelError;
use hofscan_core::nn::RnnKind;
use hofscan_core::pipeline::PipelineError;

use config::ProviderSpec;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            PipelineError::Config(_) | PipelineError::BadRatio(_) => CliError::Usage(e.to_string()),
            PipelineError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            EvalError::Model(m) => m.into(),
            EvalError::EmptyFeatureSet(_) | EvalError::MissingEncoder { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Hateful/offensive tweet classifier.
#[derive(Debug, Parser)]
#[command(name = "hofscan", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. They override the `--config` file.
#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// TOML file with [model], [training] and [paths] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for both initialization and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// emb1:<path> or mock:<dim>:<seed>
    #[arg(long, global = true)]
    pub provider: Option<ProviderSpec>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Output file; standard output when omitted (required by `train`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// markdown or csv
    #[arg(long, global = true, default_value = "markdown")]
    pub format: ReportFormat,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// e.g. EMB+CH+HW
    #[arg(long, global = true)]
    pub features: Option<FeatureSet>,
    /// gru, lstm or bigru
    #[arg(long, global = true)]
    pub rnn_kind: Option<RnnKind>,
    #[arg(long, global = true)]
    pub rnn_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize the text column of a dataset TSV.
    Preprocess { input: PathBuf },
    /// Train a model and write a checkpoint.
    Train { dataset: PathBuf },
    /// Score a checkpoint on a labeled TSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        test: PathBuf,
    },
    /// Print `id<TAB>label<TAB>probability` per input.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        #[arg(required_unless_present = "text")]
        input: Option<PathBuf>,
    },
    /// Train and score one model per feature set.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated feature sets; all seven combinations by default.
        #[arg(long, value_delimiter = ',')]
        sets: Vec<FeatureSet>,
    },
    /// Check an EMB1 file against a dataset.
    ValidateEmbeddings { embeddings: PathBuf, dataset: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let nan = PipelineError::NonFiniteLoss {
            loss: f64::NAN,
            epoch: 0,
            batch: 3,
            diagnostics: String::new(),
        };
        assert_eq!(CliError::from(nan).code(), 3);
        assert_eq!(CliError::from(EvalError::Pipeline(PipelineError::NoSamples)).code(), 2);
        assert_eq!(CliError::from(PipelineError::BadRatio(1.5)).code(), 1);
        assert_eq!(CliError::from(ModelError::Config("x".into())).code(), 1);
        assert_eq!(CliError::from(EvalError::EmptyFeatureSet(0)).code(), 1);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
