use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use macin::corpus::{build_article_matrix, embed_sentence, read_canonical, tokenize};
use macin::extractor::{
    attention_from_output, rank_top_k, scores_from_output, write_attention_csv,
    write_attention_json,
};
use macin::model::{checkpoint::load_checkpoint, forward};
use ndtensor::Mode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::RunManifest;
use crate::CmdError;

#[derive(Args)]
pub struct ExtractArgs {
    /// Trained checkpoint
    #[arg(long)]
    pub model: PathBuf,
    /// Canonical JSONL article file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Directory for per-article attention JSON/CSV exports
    #[arg(long)]
    pub emit_attention: Option<PathBuf>,
    /// Rankings output (JSONL, one article per line)
    #[arg(long)]
    pub out: PathBuf,
    /// Word-embedding file; falls back to MACIN_EMBEDDINGS
    #[arg(long, env = "MACIN_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
}

pub fn run(args: ExtractArgs) -> Result<(), CmdError> {
    if args.top_k == 0 {
        return Err(CmdError::input("--top-k must be at least 1"));
    }
    let state = load_checkpoint(&args.model).map_err(CmdError::checkpoint)?;
    let articles = read_canonical(&args.data).map_err(CmdError::input)?;
    let table = super::load_table(args.embeddings.as_ref(), state.config.embed_dim)?;

    if let Some(dir) = &args.emit_attention {
        std::fs::create_dir_all(dir).map_err(CmdError::input)?;
    }

    let mut out = std::fs::File::create(&args.out).map_err(CmdError::input)?;
    for article in &articles {
        let matrix = build_article_matrix(article, &table, state.config.max_sentences)
            .map_err(CmdError::input)?;
        let headline = embed_sentence(&tokenize(&article.headline), &table);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (output, _) = forward(&state, &matrix, &headline, None, Mode::Eval, &mut rng)
            .map_err(CmdError::input)?;
        let scores = scores_from_output(&output);
        let ranking = rank_top_k(article.id, &scores, args.top_k);

        let ids: Vec<usize> = ranking.ranked.iter().map(|r| r.sentence_id).collect();
        let texts: Vec<&str> = ids.iter().map(|&i| article.sentences[i].as_str()).collect();
        let ranked_scores: Vec<f64> = ranking.ranked.iter().map(|r| r.score).collect();
        let line = serde_json::json!({
            "article_id": article.id,
            "sentence_ids": ids,
            "texts": texts,
            "scores": ranked_scores,
            "k": args.top_k,
        });
        writeln!(out, "{line}").map_err(CmdError::input)?;

        if let Some(dir) = &args.emit_attention {
            let export = attention_from_output(article.id, &output);
            write_attention_json(
                article,
                &export,
                &ranking,
                dir.join(format!("attention_{}.json", article.id)),
            )
            .map_err(CmdError::input)?;
            write_attention_csv(
                &export,
                dir.join(format!("headline_attention_{}.csv", article.id)),
                dir.join(format!("sentence_attention_{}.csv", article.id)),
            )
            .map_err(CmdError::input)?;
        }
    }

    let config = serde_json::json!({
        "model": args.model.display().to_string(),
        "data": args.data.display().to_string(),
        "top_k": args.top_k,
        "emit_attention": args.emit_attention.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::new("extract", config, state.seed)
        .with_input(&args.model)?
        .with_input(&args.data)?;
    if let Some(emb) = &args.embeddings {
        manifest = manifest.with_input(emb)?;
    }
    manifest.write(args.out.with_extension("manifest.json"))?;
    Ok(())
}
