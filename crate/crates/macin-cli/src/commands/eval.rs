use std::io::BufRead;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use macin::evalkit::{evaluate_dataset, Aggregation, GoldClaims, MatchMode, Prediction};

use crate::CmdError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Ids,
    Cosine,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions JSONL as written by `extract`
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold claims JSON: array of {article_id, sentence_ids | claim_texts}
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Word-embedding file (required in cosine mode)
    #[arg(long, env = "MACIN_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
    /// Fail when any evaluated article lacks gold annotations
    #[arg(long)]
    pub strict: bool,
    /// Average per-article scores instead of pooling counts
    #[arg(long)]
    pub per_article: bool,
    /// Embedding width of the table (cosine mode)
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
}

pub fn run(args: EvalArgs) -> Result<(), CmdError> {
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(CmdError::input(format!(
            "--threshold {} is outside (0, 1]",
            args.threshold
        )));
    }
    if args.k == 0 {
        return Err(CmdError::input("--k must be at least 1"));
    }
    let mode = match args.mode {
        ModeArg::Ids => MatchMode::Ids,
        ModeArg::Cosine => MatchMode::Cosine,
    };
    let table = match mode {
        MatchMode::Cosine => {
            if args.embeddings.is_none() && std::env::var("MACIN_EMBEDDINGS").is_err() {
                return Err(CmdError::input(
                    "--mode cosine requires --embeddings (or MACIN_EMBEDDINGS)",
                ));
            }
            Some(super::load_table(args.embeddings.as_ref(), args.dim)?)
        }
        MatchMode::Ids => None,
    };

    let file = std::fs::File::open(&args.pred).map_err(CmdError::input)?;
    let mut predictions = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(CmdError::input)?;
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction = serde_json::from_str(&line).map_err(CmdError::input)?;
        predictions.push(pred);
    }

    let gold_raw = std::fs::read_to_string(&args.gold).map_err(CmdError::input)?;
    let golds: Vec<GoldClaims> = serde_json::from_str(&gold_raw).map_err(CmdError::input)?;

    let aggregation = if args.per_article {
        Aggregation::PerArticleMacro
    } else {
        Aggregation::Micro
    };
    let report = evaluate_dataset(
        &predictions,
        &golds,
        mode,
        args.threshold,
        table.as_ref(),
        args.k,
        aggregation,
    )
    .map_err(CmdError::input)?;

    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if args.strict && !report.skipped_articles.is_empty() {
        return Err(CmdError::input(format!(
            "missing gold annotations for articles {:?}",
            report.skipped_articles
        )));
    }
    Ok(())
}
