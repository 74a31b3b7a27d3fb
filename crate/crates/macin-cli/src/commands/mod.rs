pub mod eval;
pub mod extract;
pub mod gradcheck;
pub mod ingest;
pub mod train;

use std::path::PathBuf;

use macin::corpus::{load_embeddings_with_dim, EmbeddingTable};

use crate::CmdError;

/// Resolves the embeddings path from the flag or the MACIN_EMBEDDINGS
/// environment variable and loads the table at the expected width.
pub fn load_table(flag: Option<&PathBuf>, dim: usize) -> Result<EmbeddingTable, CmdError> {
    let path = match flag {
        Some(p) => p.clone(),
        None => std::env::var("MACIN_EMBEDDINGS")
            .map(PathBuf::from)
            .map_err(|_| {
                CmdError::input(
                    "no embeddings given: pass --embeddings or set MACIN_EMBEDDINGS",
                )
            })?,
    };
    let table = load_embeddings_with_dim(&path, dim).map_err(CmdError::input)?;
    if table.skipped_lines() > 0 {
        log::warn!("{} malformed embedding lines skipped", table.skipped_lines());
    }
    Ok(table)
}
