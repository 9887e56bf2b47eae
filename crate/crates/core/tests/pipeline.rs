use std::collections::BTreeMap;

use ndarray::s;
use proptest::prelude::*;
use slideqc::pipeline::{
    emit_report, read_verdicts, reassemble, render_overlay, run_pipeline, tile_image, ArtifactSegmenter, Decision,
    DecisionReport, PipelineConfig, Policy, SeverityGrader,
};
use slideqc::{ArtifactKind, BinaryMask, Result, RgbImage, Severity};

/// Flags every pixel darker than `cut` in the red channel.
struct DarkSegmenter {
    cut: f64,
}

impl ArtifactSegmenter for DarkSegmenter {
    fn id(&self) -> String {
        format!("dark<{}", self.cut)
    }
    fn segment(&self, tile: &RgbImage) -> Result<BinaryMask> {
        Ok(tile.slice(s![.., .., 0]).mapv(|v| u8::from(v < self.cut)))
    }
}

struct FixedGrader(Severity);

impl SeverityGrader for FixedGrader {
    fn id(&self) -> String {
        format!("fixed-{}", self.0)
    }
    fn grade(&self, _: &RgbImage) -> Result<[f64; 3]> {
        let mut p = [0.1; 3];
        p[self.0.index()] = 0.8;
        Ok(p)
    }
}

fn white(h: usize, w: usize) -> RgbImage {
    RgbImage::from_elem((h, w, 3), 1.0)
}

fn segs(seg: &dyn ArtifactSegmenter) -> BTreeMap<ArtifactKind, &dyn ArtifactSegmenter> {
    ArtifactKind::ALL.iter().map(|k| (*k, seg)).collect()
}

fn config(tile: usize, trigger: f64) -> PipelineConfig {
    PipelineConfig { tile_side: tile, stride: tile, policy: Policy { trigger_fraction: trigger, ..Policy::default() }, ..Default::default() }
}

#[test]
fn tiling_examples() {
    assert_eq!(tile_image(&white(512, 512), 256, 256, "s").unwrap().len(), 4);
    assert_eq!(tile_image(&white(64, 64), 64, 64, "s").unwrap().len(), 1);
    let t = tile_image(&white(300, 300), 256, 256, "s").unwrap();
    assert_eq!(t.len(), 4);
    assert_eq!(t.iter().filter(|t| t.padded).count(), 3);
    assert_eq!(t[3].origin, (256, 256));
    assert_eq!(t[3].image[[100, 100, 0]], 0.0);
    assert!(tile_image(&white(100, 300), 128, 128, "s").is_err());
    assert!(tile_image(&white(100, 100), 10, 0, "s").is_err());
    let ids: Vec<String> = t.iter().map(|t| t.id.clone()).collect();
    assert_eq!(ids, ["s_r000_c000", "s_r000_c001", "s_r001_c000", "s_r001_c001"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn tiling_is_lossless_on_divisible_images(rows in 1usize..4, cols in 1usize..4, side in 1usize..9, seed in any::<u64>()) {
        let (h, w) = (rows * side, cols * side);
        let img = RgbImage::from_shape_fn((h, w, 3), |(y, x, c)| ((seed as usize + y * 31 + x * 7 + c) % 256) as f64 / 255.0);
        let tiles = tile_image(&img, side, side, "p").unwrap();
        prop_assert_eq!(tiles.len(), rows * cols);
        prop_assert_eq!(reassemble(&tiles, h, w), img);
    }

    #[test]
    fn raising_the_trigger_never_removes_a_retain(split in 0usize..64, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let mut img = white(64, 128);
        img.slice_mut(s![..split, ..64, ..]).fill(0.2);
        img.slice_mut(s![..split / 2, 64.., ..]).fill(0.2);
        let seg = DarkSegmenter { cut: 0.5 };
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let a = run_pipeline(&img, "m", &segs(&seg), &FixedGrader(Severity::High), &config(64, lo)).unwrap();
        let b = run_pipeline(&img, "m", &segs(&seg), &FixedGrader(Severity::High), &config(64, hi)).unwrap();
        for (va, vb) in a.verdicts.iter().zip(&b.verdicts) {
            if va.decision == Decision::Retain {
                prop_assert_eq!(vb.decision, Decision::Retain);
            }
        }
    }
}

#[test]
fn overlay_touches_exactly_the_masked_pixels() {
    let img = RgbImage::from_shape_fn((16, 16, 3), |(y, x, c)| ((y * 16 + x + c) % 50) as f64 / 100.0 + 0.3);
    let empty = BinaryMask::zeros((16, 16));
    assert_eq!(render_overlay(&img, &empty, Some(Severity::High)).unwrap(), img);
    let full = BinaryMask::ones((16, 16));
    let o = render_overlay(&img, &full, Some(Severity::Mid)).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            assert!((0..3).any(|c| o[[y, x, c]] != img[[y, x, c]]));
        }
    }
    let mut half = BinaryMask::zeros((16, 16));
    half.slice_mut(s![.., ..8]).fill(1);
    let o = render_overlay(&img, &half, Some(Severity::Low)).unwrap();
    let mut changed = 0;
    for y in 0..16 {
        for x in 0..16 {
            let diff = (0..3).any(|c| o[[y, x, c]] != img[[y, x, c]]);
            assert_eq!(diff, half[[y, x]] == 1);
            changed += usize::from(diff);
        }
    }
    assert_eq!(changed, 128);
    assert!(render_overlay(&img, &BinaryMask::zeros((4, 4)), None).is_err());
}

#[test]
fn policy_fixtures() {
    let seg = DarkSegmenter { cut: 0.5 };
    // Blank tile, empty mask.
    let r = run_pipeline(&white(64, 64), "b", &segs(&seg), &FixedGrader(Severity::High), &config(64, 0.01)).unwrap();
    assert_eq!(r.verdicts[0].decision, Decision::Retain);
    assert_eq!(r.verdicts[0].artifact_fraction, 0.0);
    assert!(r.verdicts[0].severity_probabilities.is_none());

    // 30% artifact region graded high.
    let mut img = white(100, 100);
    img.slice_mut(s![..30, .., ..]).fill(0.1);
    let r = run_pipeline(&img, "x", &segs(&seg), &FixedGrader(Severity::High), &config(100, 0.01)).unwrap();
    let v = &r.verdicts[0];
    assert!((v.artifact_fraction - 0.3).abs() < 1e-12);
    assert_eq!(v.decision, Decision::ExcludeRegion);
    assert_eq!(v.severity, Some(Severity::High));
    assert!((v.severity_probabilities.unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-6);

    let r = run_pipeline(&img, "x", &segs(&seg), &FixedGrader(Severity::Mid), &config(100, 0.01)).unwrap();
    assert_eq!(r.verdicts[0].decision, Decision::FlagSlidePrep);
    let r = run_pipeline(&img, "x", &segs(&seg), &FixedGrader(Severity::Low), &config(100, 0.01)).unwrap();
    assert_eq!(r.verdicts[0].decision, Decision::Retain);

    // Trigger 1.0 retains everything.
    let dark = RgbImage::zeros((128, 128, 3));
    let r = run_pipeline(&dark, "d", &segs(&seg), &FixedGrader(Severity::High), &config(64, 1.0)).unwrap();
    assert!(r.verdicts.iter().all(|v| v.decision == Decision::Retain));
    assert_eq!(r.counts()[&Decision::Retain], 4);

    // Missing model.
    let only_folds: BTreeMap<ArtifactKind, &dyn ArtifactSegmenter> = [(ArtifactKind::TissueFold, &seg as &dyn ArtifactSegmenter)].into();
    assert!(run_pipeline(&img, "x", &only_folds, &FixedGrader(Severity::High), &config(100, 0.01)).is_err());
}

#[test]
fn padding_does_not_count_as_artifact() {
    let seg = DarkSegmenter { cut: 0.5 };
    let r = run_pipeline(&white(96, 96), "p", &segs(&seg), &FixedGrader(Severity::High), &config(64, 0.01)).unwrap();
    assert_eq!(r.verdicts.len(), 4);
    assert!(r.verdicts.iter().all(|v| v.artifact_fraction == 0.0 && v.decision == Decision::Retain));
    assert!(r.tiles.iter().all(|t| t.mask.iter().all(|&m| m == 0)));
}

#[test]
fn reports_are_complete_and_byte_stable() {
    let seg = DarkSegmenter { cut: 0.5 };
    let mut img = white(128, 128);
    img.slice_mut(s![10..40, 10..60, ..]).fill(0.2);
    img.slice_mut(s![70..128, 64..128, ..]).fill(0.3);
    let report = run_pipeline(&img, "slide", &segs(&seg), &FixedGrader(Severity::High), &config(64, 0.01)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files.overlays.len(), 4);
    assert!(files.overlays.iter().all(|p| p.exists()));
    assert_eq!(read_verdicts(&files.verdicts).unwrap(), report.verdicts);
    let summary = std::fs::read_to_string(&files.summary).unwrap();
    assert_eq!(summary, "decision,count\nretain,2\nexclude_region,2\nflag_slide_prep,0\ntotal,4\n");

    let snapshot = |d: &std::path::Path| {
        let mut names: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        names.into_iter().map(|p| (p.clone(), std::fs::read(&p).unwrap())).collect::<Vec<_>>()
    };
    let first = snapshot(dir.path());
    assert_eq!(first.len(), 4 + 3);
    let again = run_pipeline(&img, "slide", &segs(&seg), &FixedGrader(Severity::High), &config(64, 0.01)).unwrap();
    emit_report(&again, dir.path()).unwrap();
    assert_eq!(snapshot(dir.path()), first);

    let empty = DecisionReport { verdicts: vec![], tiles: vec![], ..report };
    let d2 = tempfile::tempdir().unwrap();
    let f2 = emit_report(&empty, d2.path()).unwrap();
    assert!(f2.overlays.is_empty());
    assert_eq!(std::fs::read_to_string(f2.summary).unwrap(), "decision,count\nretain,0\nexclude_region,0\nflag_slide_prep,0\ntotal,0\n");
}
