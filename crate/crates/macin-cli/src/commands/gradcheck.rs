use std::path::PathBuf;

use clap::Args;

use macin::gradcheck::{check_variant, toy_config, FULL_MODEL_TOLERANCE, MAX_FD_SENTENCES};
use macin::model::{ModelConfig, Variant};

use crate::CmdError;

#[derive(Args)]
pub struct GradcheckArgs {
    /// Toy model config JSON; the built-in toy config when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test-harness hook: corrupt one analytic gradient so the check must
    /// fail (negative control)
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

pub fn run(args: GradcheckArgs) -> Result<(), CmdError> {
    let base: Option<ModelConfig> = match &args.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(CmdError::input)?;
            let cfg: ModelConfig = serde_json::from_str(&raw).map_err(CmdError::input)?;
            if cfg.max_sentences > MAX_FD_SENTENCES {
                return Err(CmdError::input(format!(
                    "config has {} sentences; finite differences are capped at {}",
                    cfg.max_sentences, MAX_FD_SENTENCES
                )));
            }
            Some(cfg)
        }
        None => None,
    };

    let mut all_passed = true;
    let mut worst: Option<(Variant, String, f64)> = None;
    for variant in [Variant::Hv, Variant::Ohwv, Variant::Combined] {
        let mut cfg = base.clone().unwrap_or_else(|| toy_config(variant));
        cfg.variant = variant;
        let report = check_variant(&cfg, args.seed, FULL_MODEL_TOLERANCE, args.corrupt)
            .map_err(CmdError::input)?;
        println!("variant {variant}:");
        for group in &report.groups {
            println!("  {:<24} max rel err {:.3e}", group.name, group.max_rel_err);
        }
        println!(
            "  => max {:.3e} at {} [{}]",
            report.max_rel_err,
            report.worst,
            if report.passed { "ok" } else { "FAIL" }
        );
        if !report.passed {
            all_passed = false;
            if worst.as_ref().map_or(true, |w| report.max_rel_err > w.2) {
                worst = Some((variant, report.worst.clone(), report.max_rel_err));
            }
        }
    }

    if all_passed {
        println!("gradient check passed (tolerance {FULL_MODEL_TOLERANCE:.0e})");
        Ok(())
    } else {
        let (variant, name, err) = worst.expect("a failing group");
        Err(CmdError::verification(format!(
            "gradient mismatch: {variant} parameter {name} at rel err {err:.3e}"
        )))
    }
}
