use std::path::PathBuf;

use clap::{Args, ValueEnum};

use macin::corpus::read_canonical;
use macin::error::TrainError;
use macin::model::{checkpoint::save_checkpoint, ModelConfig, Variant};
use macin::trainer::{cross_validate, write_log_jsonl, TrainConfig};

use crate::manifest::RunManifest;
use crate::CmdError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Hv,
    Ohwv,
    Combined,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Hv => Variant::Hv,
            VariantArg::Ohwv => Variant::Ohwv,
            VariantArg::Combined => Variant::Combined,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Canonical JSONL article file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Convolution filter count (must divide by 8)
    #[arg(long, default_value_t = 64)]
    pub filters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Word-embedding file; falls back to MACIN_EMBEDDINGS
    #[arg(long, env = "MACIN_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
    /// Output directory for checkpoints, logs, and the run manifest
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.99)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta2: f64,
    /// Sentence capacity per article
    #[arg(long, default_value_t = 500)]
    pub sentences: usize,
    /// Embedding width
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Convolution window in sentences
    #[arg(long, default_value_t = 4)]
    pub kernel: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 20000)]
    pub vocab_cap: usize,
    #[arg(long, default_value_t = 256)]
    pub decoder_hidden: usize,
    #[arg(long, default_value_t = 128)]
    pub decoder_embed: usize,
}

pub fn run(args: TrainArgs) -> Result<(), CmdError> {
    if args.folds < 2 {
        return Err(CmdError::input(format!(
            "--folds {} leaves no validation fold; need at least 2",
            args.folds
        )));
    }
    let articles = read_canonical(&args.data).map_err(CmdError::input)?;
    let table = super::load_table(args.embeddings.as_ref(), args.dim)?;

    let model_config = ModelConfig {
        embed_dim: args.dim,
        max_sentences: args.sentences,
        conv_width: args.kernel,
        filters: args.filters,
        heads: args.heads,
        vocab_total: args.vocab_cap + 3,
        variant: args.variant.into(),
        dropout: args.dropout,
        decoder_hidden: args.decoder_hidden,
        decoder_embed: args.decoder_embed,
        ..ModelConfig::default()
    };
    model_config.validate().map_err(CmdError::input)?;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        beta1: args.beta1,
        beta2: args.beta2,
        seed: args.seed,
        vocab_capacity: args.vocab_cap,
        ..TrainConfig::default()
    };

    std::fs::create_dir_all(&args.out).map_err(CmdError::input)?;
    let results = cross_validate(&articles, &table, args.folds, &model_config, &train_config)
        .map_err(|e| match e {
            TrainError::Corpus(inner) => CmdError::input(inner),
            other => CmdError::training(other),
        })?;

    for (fold, result) in results.iter().enumerate() {
        let ckpt = args.out.join(format!("fold_{fold}.ckpt"));
        save_checkpoint(&result.state, &ckpt).map_err(CmdError::checkpoint)?;
        write_log_jsonl(&result.log, args.out.join(format!("fold_{fold}.log.jsonl")))
            .map_err(CmdError::input)?;
        std::fs::write(
            args.out.join(format!("fold_{fold}.vocab.json")),
            serde_json::to_string(&result.vocab).expect("vocab serializes"),
        )
        .map_err(CmdError::input)?;
        let last = result.log.epochs.last().expect("at least one epoch");
        println!(
            "fold {fold}: train loss {:.6}{} ({:.1}s)",
            last.train_total,
            last.val_total
                .map(|v| format!(", val loss {v:.6}"))
                .unwrap_or_default(),
            result.log.wall_secs,
        );
    }

    let config = serde_json::json!({
        "model": model_config,
        "train": train_config,
        "folds": args.folds,
        "data": args.data.display().to_string(),
    });
    let mut manifest = RunManifest::new("train", config, args.seed).with_input(&args.data)?;
    if let Some(emb) = &args.embeddings {
        manifest = manifest.with_input(emb)?;
    }
    manifest.write(args.out.join("manifest.json"))?;
    Ok(())
}
