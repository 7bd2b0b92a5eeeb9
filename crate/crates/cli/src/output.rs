use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use dbarl2_core::CheckRecord;

use crate::commands::Outcome;

/// Write `report.jsonl`, `summary.csv` and any artifacts into `dir`,
/// replacing earlier runs of the same command.
pub fn write(dir: &Path, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut jsonl = Vec::new();
    for r in &outcome.records {
        serde_json::to_writer(&mut jsonl, r)?;
        jsonl.push(b'\n');
    }
    fs::write(dir.join("report.jsonl"), jsonl)?;
    fs::write(dir.join("summary.csv"), summary(&outcome.records)?)?;
    for a in &outcome.artifacts {
        fs::write(dir.join(&a.name), &a.contents).with_context(|| format!("writing {}", a.name))?;
    }
    Ok(())
}

pub fn summary(records: &[CheckRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check_id", "lhs", "rhs", "stderr", "margin", "pass"])?;
    for r in records {
        w.serialize((&r.check_id, r.lhs, r.rhs, r.stderr, r.margin, r.pass))?;
    }
    Ok(w.into_inner()?)
}
