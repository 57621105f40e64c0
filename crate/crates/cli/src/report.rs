//! Aggregation of segmentation scores across completed scenes.

use canopy_core::metrics::SegScores;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::pipeline::SceneReport;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub scenes: usize,
    pub frames: usize,
    pub mean: SegScores,
    pub std: SegScores,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of the three scores, treating
/// each scene's per-frame mean as one sample.
pub fn aggregate(reports: &[SceneReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(CliError::InvalidManifest(
            "need at least one completed scene to aggregate".into(),
        ));
    }
    let ari: Vec<f64> = reports.iter().map(|r| r.mean.ari_fg).collect();
    let msc: Vec<f64> = reports.iter().map(|r| r.mean.msc_fg).collect();
    let iou: Vec<f64> = reports.iter().map(|r| r.mean.miou_bg).collect();
    let (ari_m, ari_s) = mean_std(&ari);
    let (msc_m, msc_s) = mean_std(&msc);
    let (iou_m, iou_s) = mean_std(&iou);
    Ok(AggregateReport {
        scenes: reports.len(),
        frames: reports.iter().map(|r| r.frames.len()).sum(),
        mean: SegScores {
            ari_fg: ari_m,
            msc_fg: msc_m,
            miou_bg: iou_m,
        },
        std: SegScores {
            ari_fg: ari_s,
            msc_fg: msc_s,
            miou_bg: iou_s,
        },
    })
}

/// Two-decimal human-readable table; the JSON report keeps full precision.
pub fn human_table(agg: &AggregateReport) -> String {
    let mut out = String::new();
    writeln!(out, "metric    mean   std    ({} scenes, {} frames)", agg.scenes, agg.frames)
        .unwrap();
    writeln!(out, "ari_fg    {:.2}   {:.2}", agg.mean.ari_fg, agg.std.ari_fg).unwrap();
    writeln!(out, "msc_fg    {:.2}   {:.2}", agg.mean.msc_fg, agg.std.msc_fg).unwrap();
    writeln!(out, "miou_bg   {:.2}   {:.2}", agg.mean.miou_bg, agg.std.miou_bg).unwrap();
    out
}

/// Reads `report.json` from each scene directory and writes the aggregate
/// JSON to `out`.
pub fn report_metrics(scene_dirs: &[std::path::PathBuf], out: &Path) -> Result<AggregateReport> {
    let mut reports = Vec::with_capacity(scene_dirs.len());
    for dir in scene_dirs {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        reports.push(serde_json::from_str::<SceneReport>(&text)?);
    }
    let agg = aggregate(&reports)?;
    let text = serde_json::to_string_pretty(&agg)?;
    std::fs::write(out, text + "\n").map_err(|e| CliError::io(out, e))?;
    Ok(agg)
}
