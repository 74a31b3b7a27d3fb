use std::path::PathBuf;

use clap::{Args, ValueEnum};

use macin::corpus::{load_cdc, load_dnf, write_canonical, DnfFlavor};
use macin::evalkit::GoldClaims;

use crate::manifest::RunManifest;
use crate::CmdError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DatasetArg {
    Dnf700,
    Dnf300,
    Cdc,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Which corpus schema to ingest
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    /// Metadata JSON file
    #[arg(long)]
    pub json: PathBuf,
    /// Directory of article_<id> body files (DNF corpora)
    #[arg(long)]
    pub articles: Option<PathBuf>,
    /// Canonical JSONL output path
    #[arg(long)]
    pub out: PathBuf,
    /// Gold-claims JSON output for evaluation-eligible CDC articles
    #[arg(long)]
    pub gold_out: Option<PathBuf>,
}

pub fn run(args: IngestArgs) -> Result<(), CmdError> {
    let articles = match args.dataset {
        DatasetArg::Dnf700 | DatasetArg::Dnf300 => {
            let dir = args.articles.as_ref().ok_or_else(|| {
                CmdError::input("--articles DIR is required for DNF corpora")
            })?;
            let flavor = match args.dataset {
                DatasetArg::Dnf700 => DnfFlavor::Dnf700,
                _ => DnfFlavor::Dnf300,
            };
            let (articles, report) = load_dnf(&args.json, dir, flavor).map_err(CmdError::input)?;

            let histogram: Vec<String> = report
                .label_histogram
                .iter()
                .map(|(label, count)| format!("{label}={count}"))
                .collect();
            println!("label histogram: {}", histogram.join(" "));
            println!("articles ingested: {}", report.loaded);
            for id in &report.missing_bodies {
                println!("warning: missing body file for article {id}; skipped");
            }
            for id in &report.empty_bodies {
                println!("warning: empty body for article {id}; skipped");
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            if report.has_schema_violations() {
                let ids: Vec<String> =
                    report.bad_labels.iter().map(|id| id.to_string()).collect();
                return Err(CmdError::input(format!(
                    "schema violations: invalid labels on articles [{}]",
                    ids.join(", ")
                )));
            }
            articles
        }
        DatasetArg::Cdc => {
            let cdc = load_cdc(&args.json).map_err(CmdError::input)?;
            let eval_count = cdc.iter().filter(|a| a.eval_eligible()).count();
            let train_only = cdc.iter().filter(|a| a.training_only()).count();
            println!(
                "articles ingested: {} ({} eval-eligible, {} without claims)",
                cdc.len(),
                eval_count,
                train_only
            );
            if let Some(gold_path) = &args.gold_out {
                let golds: Vec<GoldClaims> = cdc
                    .iter()
                    .filter(|a| a.eval_eligible())
                    .map(|a| GoldClaims {
                        article_id: a.article.id,
                        sentence_ids: None,
                        claim_texts: Some(a.gold_claims.clone()),
                    })
                    .collect();
                std::fs::write(
                    gold_path,
                    serde_json::to_string_pretty(&golds).expect("gold serializes"),
                )
                .map_err(CmdError::input)?;
            }
            cdc.into_iter().map(|a| a.article).collect()
        }
    };

    write_canonical(&articles, &args.out).map_err(CmdError::input)?;

    let config = serde_json::json!({
        "dataset": format!("{:?}", args.dataset),
        "json": args.json.display().to_string(),
        "articles": args.articles.as_ref().map(|p| p.display().to_string()),
        "out": args.out.display().to_string(),
    });
    RunManifest::new("ingest", config, 0)
        .with_input(&args.json)?
        .write(args.out.with_extension("manifest.json"))?;
    Ok(())
}
