//! File formats: JSONL pools, candidate dumps, caption embeddings, score and
//! selection logs, and the CSV learning-curve report.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionScore;
use crate::embedder::FileEmbeddings;
use crate::error::{CoreError, Result};
use crate::generator::CandidateDump;
use crate::runner::{IterationRow, SelectionRecord};
use crate::types::{tokenize, Candidate, CandidateSet, Origin, VideoExample};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read a JSONL file, one `T` per non-empty line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Write one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = File::create(path)?;
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CoreError::data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Append JSON lines to an existing (or new) file.
pub fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = File::options().create(true).append(true).open(path)?;
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CoreError::data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Pool file: one `{"id", "visual_feature", "references"?}` object per line.
pub fn read_pool(path: &Path) -> Result<Vec<VideoExample>> {
    let pool: Vec<VideoExample> = read_jsonl(path)?;
    if pool.is_empty() {
        return Err(parse_err(path, 0, "pool file has no rows"));
    }
    let mut dims: Vec<usize> = pool
        .iter()
        .filter(|v| !v.visual_feature.is_empty())
        .map(|v| v.visual_feature.len())
        .collect();
    dims.dedup();
    if dims.len() > 1 {
        return Err(parse_err(path, 0, "visual feature dimensions differ"));
    }
    let mut ids: Vec<&str> = pool.iter().map(|v| v.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(parse_err(path, 0, "duplicate video ids in pool"));
    }
    Ok(pool)
}

pub fn write_pool(path: &Path, pool: &[VideoExample]) -> Result<()> {
    write_jsonl(path, pool)
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpCandidateRow {
    caption: String,
    logprob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpRow {
    video_id: String,
    origin: String,
    candidates: Vec<DumpCandidateRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visual_feature: Option<Vec<f64>>,
}

/// Candidate dump: `{"video_id", "origin", "candidates", "visual_feature"?}`
/// per line, origin one of "base", "fp:<k>", "mp:<p>". Captions are
/// canonicalized by the shared tokenizer.
pub fn read_dump(path: &Path) -> Result<CandidateDump> {
    let rows: Vec<DumpRow> = read_jsonl(path)?;
    let mut dump = CandidateDump::new();
    for (i, row) in rows.into_iter().enumerate() {
        let origin = Origin::parse(&row.origin).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let candidates: Vec<Candidate> = row
            .candidates
            .into_iter()
            .map(|c| {
                let tokens = tokenize(&c.caption);
                Candidate::new(tokens, c.logprob)
            })
            .collect::<Result<_>>()
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let set = CandidateSet::new(row.video_id, candidates, origin)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        dump.insert(set, row.visual_feature)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
    }
    Ok(dump)
}

/// Serialize candidate sets (for example expanded ones) as dump rows.
pub fn write_dump(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    let rows: Vec<DumpRow> = sets
        .iter()
        .map(|set| DumpRow {
            video_id: set.video_id.clone(),
            origin: set.origin.as_tag(),
            candidates: set
                .candidates
                .iter()
                .map(|c| DumpCandidateRow {
                    caption: c.tokens.join(" "),
                    logprob: c.logprob,
                })
                .collect(),
            visual_feature: None,
        })
        .collect();
    write_jsonl(path, &rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRow {
    caption: String,
    vector: Vec<f64>,
}

/// Embedding file: `{"caption", "vector"}` per line, vectors re-normalized
/// on load and keyed by the canonical caption.
pub fn read_embeddings(path: &Path) -> Result<FileEmbeddings> {
    let rows: Vec<EmbeddingRow> = read_jsonl(path)?;
    let mut store = FileEmbeddings::new();
    for (i, row) in rows.into_iter().enumerate() {
        let key = tokenize(&row.caption).join(" ");
        store
            .insert(key, row.vector)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
    }
    Ok(store)
}

pub fn read_scores(path: &Path) -> Result<Vec<AcquisitionScore>> {
    read_jsonl(path)
}

pub fn write_scores(path: &Path, scores: &[AcquisitionScore]) -> Result<()> {
    write_jsonl(path, scores)
}

pub fn read_selections(path: &Path) -> Result<Vec<SelectionRecord>> {
    read_jsonl(path)
}

pub const REPORT_HEADER: &str = "iteration,labeled_fraction,bleu4,rougeL,ciderD";

/// Render report rows as the learning-curve CSV.
pub fn report_csv(rows: &[IterationRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iteration, row.labeled_fraction, row.bleu4, row.rouge_l, row.cider_d
        ));
    }
    out
}

pub fn write_report(path: &Path, rows: &[IterationRow]) -> Result<()> {
    std::fs::write(path, report_csv(rows))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<IterationRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != REPORT_HEADER {
                return Err(parse_err(path, 1, "unexpected report header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, i + 1, "expected 5 columns"));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad number: {s}")))
        };
        rows.push(IterationRow {
            iteration: fields[0]
                .parse()
                .map_err(|_| parse_err(path, i + 1, "bad iteration"))?,
            labeled_fraction: parse_f(fields[1])?,
            bleu4: parse_f(fields[2])?,
            rouge_l: parse_f(fields[3])?,
            cider_d: parse_f(fields[4])?,
            wall_time_secs: 0.0,
        });
    }
    Ok(rows)
}

/// Hypothesis file for `evaluate`: `{"video_id", "caption"}` per line.
#[derive(Debug, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub video_id: String,
    pub caption: String,
}

pub fn read_hypotheses(path: &Path) -> Result<Vec<HypothesisRow>> {
    read_jsonl(path)
}
