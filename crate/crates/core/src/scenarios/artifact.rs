//! Request sequences on disk: one interaction TSV per batch plus a JSON
//! manifest giving the order.

use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScenarioKind, UnlearnRequestSequence};
use crate::data::{parse_tsv, Dataset, ForgetBatch, InteractionLog};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestBatch {
    pub file: String,
    pub interactions: usize,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: ScenarioKind,
    /// Digest of the dataset the batches refer to.
    pub dataset_digest: String,
    pub batches: Vec<ManifestBatch>,
}

/// Writes `batch_<i>.tsv` files and the manifest into `dir`.
pub fn save_requests(dir: &Path, dataset: &Dataset, requests: &UnlearnRequestSequence) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut batches = Vec::with_capacity(requests.len());
    for (i, b) in requests.batches().iter().enumerate() {
        let file = format!("batch_{i}.tsv");
        InteractionLog::new(dataset.to_raw_rows(b.interactions())).save(&dir.join(&file))?;
        batches.push(ManifestBatch {
            file,
            interactions: b.len(),
            users: b.owners().len(),
        });
    }
    let manifest = Manifest {
        scenario: requests.scenario(),
        dataset_digest: dataset.digest(),
        batches,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a sequence written by [`save_requests`], resolving rows against
/// `dataset`.
pub fn load_requests(dir: &Path, dataset: &Dataset) -> Result<UnlearnRequestSequence> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.dataset_digest != dataset.digest() {
        return Err(Error::Invalid(format!(
            "requests in {} were generated for a different dataset",
            dir.display()
        )));
    }
    let mut batches = Vec::with_capacity(manifest.batches.len());
    for entry in &manifest.batches {
        let p = dir.join(&entry.file);
        let file = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        let log = parse_tsv(BufReader::new(file))?;
        let rows = dataset.resolve_rows(&log.rows)?;
        if rows.len() != entry.interactions {
            return Err(Error::Invalid(format!("{} does not match its manifest entry", entry.file)));
        }
        batches.push(ForgetBatch::new(rows));
    }
    UnlearnRequestSequence::new(manifest.scenario, batches)
}
