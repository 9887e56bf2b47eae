use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::overlay::render_overlay;
use super::run::{Decision, DecisionReport, PipelineConfig, TileVerdict};
use crate::data::imageio::save_rgb_png;
use crate::error::{Error, Result};

pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Serialize)]
struct ReportMeta<'a> {
    slide_id: &'a str,
    tiles: usize,
    model_ids: &'a [String],
    config: &'a PipelineConfig,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub verdicts: PathBuf,
    pub summary: PathBuf,
    pub meta: PathBuf,
    pub overlays: Vec<PathBuf>,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn summary_csv(verdicts: &[TileVerdict]) -> String {
    let mut out = String::from("decision,count\n");
    for d in Decision::ALL {
        let _ = writeln!(out, "{},{}", d, verdicts.iter().filter(|v| v.decision == d).count());
    }
    let _ = writeln!(out, "total,{}", verdicts.len());
    out
}

/// Writes one JSON line per verdict, the decision summary, run metadata and
/// one `<tile_id>_overlay.png` per tile.
pub fn emit_report(report: &DecisionReport, out_dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut lines = String::new();
    for v in &report.verdicts {
        lines.push_str(&serde_json::to_string(v)?);
        lines.push('\n');
    }
    let files = ReportFiles {
        verdicts: out_dir.join(VERDICTS_FILE),
        summary: out_dir.join(SUMMARY_FILE),
        meta: out_dir.join(REPORT_FILE),
        overlays: report.verdicts.iter().map(|v| out_dir.join(format!("{}_overlay.png", v.tile_id))).collect(),
    };
    write(&files.verdicts, lines.as_bytes())?;
    write(&files.summary, summary_csv(&report.verdicts).as_bytes())?;
    let meta = ReportMeta {
        slide_id: &report.slide_id,
        tiles: report.verdicts.len(),
        model_ids: &report.model_ids,
        config: &report.config,
    };
    write(&files.meta, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    for ((v, t), path) in report.verdicts.iter().zip(&report.tiles).zip(&files.overlays) {
        let overlay = render_overlay(&t.image, &t.mask, v.severity)?;
        save_rgb_png(&overlay, path)?;
    }
    Ok(files)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<TileVerdict>> {
    let f = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
