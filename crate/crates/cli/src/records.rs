//! Line-delimited record files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chunknav::sim::episode::{EpisodeResult, QueryRecord};
use chunknav::sim::ExecMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PolicyKind;
use crate::failure::{Failure, OrFail, Outcome, DATA};

/// One chunk of one trajectory, as written by `chunk`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkRecord {
    pub episode_id: String,
    pub chunk_index: usize,
    pub start_index: usize,
    pub end_index: usize,
    pub text: String,
}

/// One line of an episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub mode: ExecMode,
    pub policy: PolicyKind,
    /// Seed of the policy's random streams.
    pub seed: u64,
    #[serde(flatten)]
    pub result: EpisodeResult,
}

/// One query of one episode, as dumped by `stats --entropy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub episode_id: String,
    pub mode: ExecMode,
    #[serde(flatten)]
    pub query: QueryRecord,
}

/// Records with their 1-based line numbers. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Outcome<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| Failure::new(DATA, format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, rec));
    }
    if out.is_empty() {
        return Err(Failure::new(DATA, format!("{}: no records", path.display())));
    }
    Ok(out)
}

pub fn to_jsonl<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

/// Writes `body` to `path`, or to stdout when there is no path.
pub fn emit(path: Option<&Path>, body: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| format!("{}: {e}", p.display())).runtime(),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes()).and_then(|_| out.flush()).runtime()
        }
    }
}
