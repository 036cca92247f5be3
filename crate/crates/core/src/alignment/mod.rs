//! Rare-minutia anchored alignment and least-squares fitting error.
//!
//! For every pair of same-type rare minutiae (one in the latent, one in the
//! tenprint) the latent is translated onto the tenprint anchor, rotated about
//! it over a grid of angles, matched one-to-one against the tenprint, and an
//! affine map is fitted to the matched points. The comparison's fitting error
//! is the smallest error over all anchors.

mod affine;
mod grid;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minutia::{wrap_degrees, Minutia, MinutiaSet};

pub use affine::{fit_affine, AffineFit};
pub use grid::{NearestLookup, PointGrid};

/// Similarity assigned when no anchor produces a fit.
pub const FALLBACK_SIMILARITY: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub rotation_min_deg: f64,
    pub rotation_max_deg: f64,
    pub rotation_step_deg: f64,
    /// Mated-pair distance threshold in pixels.
    pub distance_threshold: f64,
    /// Fewest mated pairs for which a fit counts. With few more pairs than
    /// the six affine parameters, chance alignments fit almost exactly.
    pub min_correspondences: usize,
    /// Fitting error (px²) that maps to zero similarity. Every mated pair
    /// lies within `distance_threshold` under the rigid alignment, which
    /// the affine family contains, so no fit exceeds its square.
    pub error_cap: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            rotation_min_deg: -45.0,
            rotation_max_deg: 45.0,
            rotation_step_deg: 1.0,
            distance_threshold: 15.0,
            min_correspondences: 7,
            error_cap: 225.0,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rotation_min_deg.is_finite()
            && self.rotation_max_deg.is_finite()
            && self.rotation_min_deg < self.rotation_max_deg
            && self.rotation_step_deg > 0.0
            && self.distance_threshold > 0.0
            && self.min_correspondences >= 3
            && self.error_cap > 0.0
            && self.error_cap.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid alignment config: {self:?}")))
        }
    }

    /// Rotation grid, inclusive of both bounds when the range is a whole
    /// number of steps.
    pub fn rotation_grid(&self) -> Vec<f64> {
        let span = self.rotation_max_deg - self.rotation_min_deg;
        let n = (span / self.rotation_step_deg + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| self.rotation_min_deg + i as f64 * self.rotation_step_deg)
            .collect()
    }
}

/// A same-type rare minutia in the latent and in the tenprint.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorPair {
    pub latent_index: usize,
    pub tenprint_index: usize,
    pub latent_anchor: Minutia,
    pub tenprint_anchor: Minutia,
    /// Translation superimposing the latent anchor on the tenprint anchor.
    pub delta: [f64; 2],
}

impl AnchorPair {
    fn new(latent: &MinutiaSet, li: usize, tenprint: &MinutiaSet, ti: usize) -> Self {
        let l = latent.minutiae()[li].clone();
        let t = tenprint.minutiae()[ti].clone();
        let delta = [t.x - l.x, t.y - l.y];
        Self {
            latent_index: li,
            tenprint_index: ti,
            latent_anchor: l,
            tenprint_anchor: t,
            delta,
        }
    }
}

/// One-to-one latent/tenprint pairing found at a given rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    /// `(latent_index, tenprint_index)`, in acceptance order.
    pub pairs: Vec<(usize, usize)>,
    pub rotation_deg: f64,
}

impl Correspondence {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// All rare latent/tenprint minutia pairs of identical type, latent-major.
pub fn enumerate_anchor_pairs(latent: &MinutiaSet, tenprint: &MinutiaSet) -> Vec<AnchorPair> {
    let mut out = Vec::new();
    for (li, l) in latent.minutiae().iter().enumerate() {
        if !l.is_rare() {
            continue;
        }
        for (ti, t) in tenprint.minutiae().iter().enumerate() {
            if t.mtype == l.mtype {
                out.push(AnchorPair::new(latent, li, tenprint, ti));
            }
        }
    }
    out
}

/// Rigid map taking the latent anchor to the tenprint anchor, then rotating
/// by `angle_deg` about it.
#[derive(Clone, Copy, Debug)]
struct AnchorRotation {
    latent_pivot: [f64; 2],
    tenprint_pivot: [f64; 2],
    cos: f64,
    sin: f64,
}

impl AnchorRotation {
    fn new(anchor: &AnchorPair, angle_deg: f64) -> Self {
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        Self {
            latent_pivot: anchor.latent_anchor.xy(),
            tenprint_pivot: anchor.tenprint_anchor.xy(),
            cos,
            sin,
        }
    }

    #[inline]
    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let dx = p[0] - self.latent_pivot[0];
        let dy = p[1] - self.latent_pivot[1];
        [
            self.tenprint_pivot[0] + self.cos * dx - self.sin * dy,
            self.tenprint_pivot[1] + self.sin * dx + self.cos * dy,
        ]
    }
}

/// Translates the latent by the anchor delta and rotates it by `angle_deg`
/// (counter-clockwise in image coordinates) about the superimposed anchor.
/// Orientations rotate by the same angle.
///
/// The result lives in the tenprint frame and is not re-validated; its
/// coordinates may be negative.
pub fn transform_latent(latent: &MinutiaSet, anchor: &AnchorPair, angle_deg: f64) -> MinutiaSet {
    let rot = AnchorRotation::new(anchor, angle_deg);
    let minutiae = latent
        .minutiae()
        .iter()
        .map(|m| {
            let [x, y] = rot.apply(m.xy());
            Minutia {
                x,
                y,
                theta: wrap_degrees(m.theta + angle_deg),
                mtype: m.mtype,
                raw_points: m.raw_points.as_ref().map(|raw| {
                    raw.iter()
                        .map(|r| {
                            let [x, y] = rot.apply([r[0], r[1]]);
                            [x, y, wrap_degrees(r[2] + angle_deg)]
                        })
                        .collect()
                }),
            }
        })
        .collect();
    MinutiaSet::from_parts_unchecked(latent.id.clone(), latent.kind, minutiae)
}

/// Mean, over latent minutiae, of the distance to the nearest tenprint
/// minutia. Orientation and type are ignored.
pub fn mean_closest_distance(latent_aligned: &MinutiaSet, tenprint: &MinutiaSet) -> f64 {
    let grid = PointGrid::new(&tenprint.points());
    mean_nearest(&grid, latent_aligned.minutiae().iter().map(Minutia::xy))
}

fn mean_nearest(grid: &PointGrid, points: impl ExactSizeIterator<Item = [f64; 2]>) -> f64 {
    let n = points.len();
    let total: f64 = points.map(|p| grid.nearest(p[0], p[1]).0.sqrt()).sum();
    total / n as f64
}

/// A tenprint with its spatial index, reusable across many latents.
#[derive(Clone, Debug)]
pub struct PreparedTenprint<'a> {
    pub set: &'a MinutiaSet,
    points: Vec<[f64; 2]>,
    lookup: NearestLookup,
}

/// Raster padding around a tenprint; rotated latent points rarely land
/// farther out than this.
const LOOKUP_PADDING: f64 = 40.0;

impl<'a> PreparedTenprint<'a> {
    pub fn new(set: &'a MinutiaSet) -> Self {
        let points = set.points();
        let lookup = NearestLookup::new(&points, LOOKUP_PADDING);
        Self { set, points, lookup }
    }
}

/// Orders candidate rotations: lower mean distance, then smaller |angle|,
/// then the more negative angle.
fn rotation_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.abs().total_cmp(&b.0.abs()))
        .then(a.0.total_cmp(&b.0))
}

/// Grid search for the rotation about the anchor minimising the mean
/// closest-point distance. Returns `(angle_deg, mean_distance)`.
pub fn search_rotation(
    latent: &MinutiaSet,
    tenprint: &MinutiaSet,
    anchor: &AnchorPair,
    cfg: &AlignmentConfig,
) -> (f64, f64) {
    let prepared = PreparedTenprint::new(tenprint);
    search_rotation_prepared(&latent.points(), &prepared, anchor, cfg)
}

fn search_rotation_prepared(
    latent_points: &[[f64; 2]],
    tenprint: &PreparedTenprint<'_>,
    anchor: &AnchorPair,
    cfg: &AlignmentConfig,
) -> (f64, f64) {
    let n = latent_points.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for angle in cfg.rotation_grid() {
        let rot = AnchorRotation::new(anchor, angle);
        // partial sums only grow, so a clearly worse angle can stop early;
        // the relative slack keeps the cut clear of rounding
        let limit = best.map_or(f64::INFINITY, |b| b.1 * n * (1.0 + 1e-12));
        let mut total = 0.0;
        let mut beaten = false;
        for &p in latent_points {
            let q = rot.apply(p);
            total += tenprint.lookup.nearest(q[0], q[1]).0.sqrt();
            if total > limit {
                beaten = true;
                break;
            }
        }
        if beaten {
            continue;
        }
        let candidate = (angle, total / n);
        if best.is_none_or(|b| rotation_order(candidate, b) == Ordering::Less) {
            best = Some(candidate);
        }
    }
    best.expect("rotation grid is never empty")
}

/// Greedy one-to-one matching by ascending distance, accepting only pairs
/// within the distance threshold. Equal distances resolve by
/// `(latent_index, tenprint_index)`.
pub fn establish_correspondence(
    latent_aligned: &MinutiaSet,
    tenprint: &MinutiaSet,
    cfg: &AlignmentConfig,
) -> Correspondence {
    let grid = PointGrid::new(&tenprint.points());
    let pairs = greedy_pairs(
        &latent_aligned.points(),
        &grid,
        tenprint.len(),
        cfg.distance_threshold,
    );
    Correspondence {
        pairs,
        rotation_deg: 0.0,
    }
}

fn greedy_pairs(
    latent_aligned: &[[f64; 2]],
    grid: &PointGrid,
    tenprint_len: usize,
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    let mut near = Vec::new();
    for (li, p) in latent_aligned.iter().enumerate() {
        grid.within(p[0], p[1], threshold, &mut near);
        candidates.extend(near.iter().map(|&(d, ti)| (d, li, ti)));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut latent_used = vec![false; latent_aligned.len()];
    let mut tenprint_used = vec![false; tenprint_len];
    let mut pairs = Vec::new();
    for (_, li, ti) in candidates {
        if !latent_used[li] && !tenprint_used[ti] {
            latent_used[li] = true;
            tenprint_used[ti] = true;
            pairs.push((li, ti));
        }
    }
    pairs
}

/// Everything computed for one anchor pair.
#[derive(Clone, Debug)]
pub struct AnchorAlignment {
    pub anchor: AnchorPair,
    pub rotation_deg: f64,
    pub mean_distance: f64,
    pub correspondence: Correspondence,
    /// `Err` when the anchor yields too few or degenerate correspondences.
    pub fit: std::result::Result<AffineFit, String>,
}

/// Why a comparison has no fitting error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoFitReason {
    /// No rare minutia type is shared by latent and tenprint.
    NoAnchor,
    /// Anchors exist but none reached the minimum correspondence count with
    /// non-degenerate geometry.
    InsufficientCorrespondence,
}

impl NoFitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NoFitReason::NoAnchor => "no-anchor",
            NoFitReason::InsufficientCorrespondence => "insufficient-correspondence",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlignmentOutcome {
    pub anchors: Vec<AnchorAlignment>,
    /// Index into `anchors` of the smallest fitting error.
    pub best: Option<usize>,
}

impl AlignmentOutcome {
    pub fn best(&self) -> Option<&AnchorAlignment> {
        self.best.map(|i| &self.anchors[i])
    }

    pub fn fitting_error(&self) -> Option<f64> {
        self.best().and_then(|a| a.fit.as_ref().ok()).map(|f| f.error)
    }

    pub fn no_fit_reason(&self) -> Option<NoFitReason> {
        match (self.best, self.anchors.is_empty()) {
            (Some(_), _) => None,
            (None, true) => Some(NoFitReason::NoAnchor),
            (None, false) => Some(NoFitReason::InsufficientCorrespondence),
        }
    }
}

fn align_anchor(
    latent: &MinutiaSet,
    latent_points: &[[f64; 2]],
    tenprint: &PreparedTenprint<'_>,
    anchor: AnchorPair,
    cfg: &AlignmentConfig,
) -> AnchorAlignment {
    let (rotation_deg, mean_distance) = search_rotation_prepared(latent_points, tenprint, &anchor, cfg);
    let rot = AnchorRotation::new(&anchor, rotation_deg);
    let aligned: Vec<[f64; 2]> = latent_points.iter().map(|&p| rot.apply(p)).collect();
    let pairs = greedy_pairs(
        &aligned,
        tenprint.lookup.grid(),
        tenprint.points.len(),
        cfg.distance_threshold,
    );
    let l_corr: Vec<[f64; 2]> = pairs.iter().map(|&(li, _)| latent.minutiae()[li].xy()).collect();
    let m_corr: Vec<[f64; 2]> = pairs.iter().map(|&(_, ti)| tenprint.points[ti]).collect();
    let fit = fit_affine(&l_corr, &m_corr, anchor.delta, cfg.min_correspondences).map_err(|e| e.to_string());
    AnchorAlignment {
        anchor,
        rotation_deg,
        mean_distance,
        correspondence: Correspondence { pairs, rotation_deg },
        fit,
    }
}

/// Runs every anchor and keeps the full per-anchor record.
pub fn align(
    latent: &MinutiaSet,
    tenprint: &PreparedTenprint<'_>,
    cfg: &AlignmentConfig,
) -> AlignmentOutcome {
    let latent_points = latent.points();
    let anchors: Vec<AnchorAlignment> = enumerate_anchor_pairs(latent, tenprint.set)
        .into_iter()
        .map(|a| align_anchor(latent, &latent_points, tenprint, a, cfg))
        .collect();
    let best = anchors
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.fit.as_ref().ok().map(|f| (i, f.error)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    AlignmentOutcome { anchors, best }
}

/// Minimum fitting error over all anchor pairs, or `None` when there is no
/// anchor or no anchor reaches `min_correspondences`.
pub fn fitting_error(latent: &MinutiaSet, tenprint: &MinutiaSet, cfg: &AlignmentConfig) -> Option<f64> {
    fitting_error_prepared(latent, &PreparedTenprint::new(tenprint), cfg)
}

pub fn fitting_error_prepared(
    latent: &MinutiaSet,
    tenprint: &PreparedTenprint<'_>,
    cfg: &AlignmentConfig,
) -> Option<f64> {
    let latent_points = latent.points();
    enumerate_anchor_pairs(latent, tenprint.set)
        .into_iter()
        .filter_map(|a| {
            align_anchor(latent, &latent_points, tenprint, a, cfg)
                .fit
                .ok()
                .map(|f| f.error)
        })
        .min_by(f64::total_cmp)
}

/// Maps a fitting error to a similarity in `[0, 1]`: linear saturation at
/// `error_cap`, complemented. A missing error maps to the 0.25 fallback.
pub fn error_to_similarity(error: Option<f64>, cfg: &AlignmentConfig) -> Result<f64> {
    match error {
        None => Ok(FALLBACK_SIMILARITY),
        Some(e) if e.is_nan() || e < 0.0 => Err(Error::InvalidInput(format!(
            "fitting error must be non-negative, got {e}"
        ))),
        Some(e) => Ok(1.0 - e.min(cfg.error_cap) / cfg.error_cap),
    }
}
