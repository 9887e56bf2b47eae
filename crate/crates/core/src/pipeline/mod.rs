//! Slide-level orchestration: tiling, per-tile segmentation and grading,
//! the exclusion policy and report output.

mod overlay;
mod report;
mod run;
mod tile;

pub use overlay::{render_overlay, severity_colour, HIGH_COLOUR, LOW_COLOUR, MID_COLOUR, OVERLAY_ALPHA, UNGRADED_COLOUR};
pub use report::{emit_report, read_verdicts, summary_csv, ReportFiles, REPORT_FILE, SUMMARY_FILE, VERDICTS_FILE};
pub use run::{
    mask_fraction, run_pipeline, to_distribution, ArtifactSegmenter, Decision, DecisionReport, PipelineConfig, Policy,
    SeverityGrader, TileArtifacts, TileVerdict,
};
pub use tile::{reassemble, tile_id, tile_image, valid_extent};
