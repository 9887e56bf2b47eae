use std::collections::BTreeMap;
use std::fmt;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::tile::{tile_image, valid_extent};
use crate::data::imageio::{resize_bilinear, resize_map_nearest};
use crate::error::{Error, Result};
use crate::metrics::BINARIZE_THRESHOLD;
use crate::segmentation::SegModel;
use crate::severity::SeverityClassifier;
use crate::stacking::StackBundle;
use crate::types::{ArtifactKind, BinaryMask, RgbImage, Severity};

/// Produces a binary artifact mask the size of the tile.
pub trait ArtifactSegmenter {
    fn id(&self) -> String;
    fn segment(&self, tile: &RgbImage) -> Result<BinaryMask>;
}

impl ArtifactSegmenter for SegModel {
    fn id(&self) -> String {
        format!("{}@{:016x}", self.architecture, self.store.fingerprint())
    }

    /// Tiles of another size are resized to the model input and the
    /// probability map is scaled back nearest-neighbour.
    fn segment(&self, tile: &RgbImage) -> Result<BinaryMask> {
        let (h, w) = (tile.shape()[0], tile.shape()[1]);
        let (mh, mw) = self.input_shape;
        let resized;
        let input = if (h, w) == (mh, mw) {
            tile
        } else {
            resized = resize_bilinear(tile, mh, mw);
            &resized
        };
        let mut probs = self.predict_batch(&[input])?.pop().ok_or_else(|| Error::Model("no prediction".into()))?;
        if (h, w) != (mh, mw) {
            probs = resize_map_nearest(&probs, h, w);
        }
        Ok(probs.mapv(|p| u8::from(p > BINARIZE_THRESHOLD)))
    }
}

/// Grades a tile into low/mid/high probabilities.
pub trait SeverityGrader {
    fn id(&self) -> String;
    fn grade(&self, tile: &RgbImage) -> Result<[f64; 3]>;
}

impl SeverityGrader for SeverityClassifier {
    fn id(&self) -> String {
        format!("{}@{:016x}", self.spec.name, self.fingerprint())
    }

    fn grade(&self, tile: &RgbImage) -> Result<[f64; 3]> {
        let side = self.input_side();
        let img = resize_bilinear(tile, side, side);
        let p = self.predict_proba(&[&img])?;
        to_distribution(&p.row(0).to_vec())
    }
}

impl SeverityGrader for StackBundle {
    fn id(&self) -> String {
        StackBundle::id(self)
    }

    fn grade(&self, tile: &RgbImage) -> Result<[f64; 3]> {
        let (_, scores) = self.predict(&[tile])?.pop().ok_or_else(|| Error::Model("no prediction".into()))?;
        to_distribution(&scores)
    }
}

/// Meta scores as a distribution: non-negative scores are normalised,
/// anything else goes through a softmax. Arg-max is preserved either way.
pub fn to_distribution(scores: &[f64]) -> Result<[f64; 3]> {
    if scores.len() != 3 || scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model(format!("expected three finite severity scores, got {scores:?}")));
    }
    let sum: f64 = scores.iter().sum();
    let mut out = [0.0; 3];
    if scores.iter().all(|v| *v >= 0.0) && sum > 0.0 {
        for (o, v) in out.iter_mut().zip(scores) {
            *o = v / sum;
        }
    } else {
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for (o, v) in out.iter_mut().zip(e) {
            *o = v / z;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Retain,
    ExcludeRegion,
    FlagSlidePrep,
}

impl Decision {
    pub const ALL: [Decision; 3] = [Decision::Retain, Decision::ExcludeRegion, Decision::FlagSlidePrep];

    pub fn name(self) -> &'static str {
        match self {
            Decision::Retain => "retain",
            Decision::ExcludeRegion => "exclude_region",
            Decision::FlagSlidePrep => "flag_slide_prep",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Tiles whose artifact share does not exceed this are retained ungraded.
    pub trigger_fraction: f64,
    pub high_action: Decision,
    pub mid_action: Decision,
    pub low_action: Decision,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            trigger_fraction: 0.01,
            high_action: Decision::ExcludeRegion,
            mid_action: Decision::FlagSlidePrep,
            low_action: Decision::Retain,
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.trigger_fraction) {
            return Err(Error::InvalidArgument(format!("trigger fraction {} outside [0, 1]", self.trigger_fraction)));
        }
        Ok(())
    }

    pub fn action(&self, severity: Severity) -> Decision {
        match severity {
            Severity::High => self.high_action,
            Severity::Mid => self.mid_action,
            Severity::Low => self.low_action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tile_side: usize,
    pub stride: usize,
    pub kinds: Vec<ArtifactKind>,
    pub policy: Policy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { tile_side: 256, stride: 256, kinds: ArtifactKind::ALL.to_vec(), policy: Policy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileVerdict {
    pub tile_id: String,
    /// `(x, y)` of the tile's top-left corner.
    pub origin: (i64, i64),
    pub padded: bool,
    /// Share of in-image pixels covered by the union of all kinds' masks.
    pub artifact_fraction: f64,
    pub kind_fractions: BTreeMap<ArtifactKind, f64>,
    /// Kind with the largest share, if any pixel was flagged.
    pub artifact_kind: Option<ArtifactKind>,
    pub severity: Option<Severity>,
    /// Low, mid, high. Absent when the tile was below the trigger.
    pub severity_probabilities: Option<[f64; 3]>,
    pub decision: Decision,
    /// Pass-through for an external scanner quality score.
    pub external_quality_score: Option<f64>,
}

/// A tile image with its union mask, kept for overlay rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct TileArtifacts {
    pub image: RgbImage,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionReport {
    pub slide_id: String,
    pub verdicts: Vec<TileVerdict>,
    pub tiles: Vec<TileArtifacts>,
    pub model_ids: Vec<String>,
    pub config: PipelineConfig,
}

impl DecisionReport {
    pub fn counts(&self) -> BTreeMap<Decision, usize> {
        let mut out: BTreeMap<Decision, usize> = Decision::ALL.iter().map(|d| (*d, 0)).collect();
        for v in &self.verdicts {
            *out.entry(v.decision).or_default() += 1;
        }
        out
    }
}

/// Tiles `image`, segments every configured artifact kind, grades tiles
/// above the trigger and applies the policy. Verdicts are row-major.
pub fn run_pipeline(
    image: &RgbImage,
    slide_id: &str,
    segmenters: &BTreeMap<ArtifactKind, &dyn ArtifactSegmenter>,
    grader: &dyn SeverityGrader,
    config: &PipelineConfig,
) -> Result<DecisionReport> {
    config.policy.validate()?;
    for k in &config.kinds {
        if !segmenters.contains_key(k) {
            return Err(Error::Model(format!("no segmentation model for {k}")));
        }
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let tiles = tile_image(image, config.tile_side, config.stride, slide_id)?;
    let mut verdicts = Vec::with_capacity(tiles.len());
    let mut kept = Vec::with_capacity(tiles.len());
    for tile in &tiles {
        let (vh, vw) = valid_extent(tile, h, w);
        let area = (vh * vw) as f64;
        let mut union = BinaryMask::zeros((tile.height(), tile.width()));
        let mut kind_fractions = BTreeMap::new();
        for k in &config.kinds {
            let mut m = segmenters[k].segment(&tile.image)?;
            if m.dim() != union.dim() {
                return Err(Error::ShapeMismatch(format!("{k} mask {:?} for tile {:?}", m.dim(), union.dim())));
            }
            // Padding is not part of the slide.
            m.slice_mut(s![vh.., ..]).fill(0);
            m.slice_mut(s![.., vw..]).fill(0);
            kind_fractions.insert(*k, m.iter().map(|&v| f64::from(v)).sum::<f64>() / area);
            union.zip_mut_with(&m, |u, &v| *u |= v);
        }
        let artifact_fraction = union.iter().map(|&v| f64::from(v)).sum::<f64>() / area;
        let artifact_kind = kind_fractions
            .iter()
            .filter(|(_, f)| **f > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k);
        let (severity, severity_probabilities, decision) = if artifact_fraction <= config.policy.trigger_fraction {
            (None, None, Decision::Retain)
        } else {
            let p = grader.grade(&tile.image)?;
            let sev = Severity::from_index(crate::stacking::argmax_of(&p)).unwrap_or(Severity::Low);
            (Some(sev), Some(p), config.policy.action(sev))
        };
        verdicts.push(TileVerdict {
            tile_id: tile.id.clone(),
            origin: tile.origin,
            padded: tile.padded,
            artifact_fraction,
            kind_fractions,
            artifact_kind,
            severity,
            severity_probabilities,
            decision,
            external_quality_score: None,
        });
        kept.push(TileArtifacts { image: tile.image.clone(), mask: union });
    }
    let mut model_ids: Vec<String> = config.kinds.iter().map(|k| format!("{k}:{}", segmenters[k].id())).collect();
    model_ids.push(format!("severity:{}", grader.id()));
    Ok(DecisionReport { slide_id: slide_id.to_string(), verdicts, tiles: kept, model_ids, config: config.clone() })
}

/// Fraction of ones in a mask.
pub fn mask_fraction(mask: &Array2<u8>) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.iter().map(|&v| f64::from(v)).sum::<f64>() / mask.len() as f64
}
