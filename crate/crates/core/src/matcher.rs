//! Reference minutiae matcher score S_m: a built-in pair-table matcher over
//! typical minutiae, loading of externally computed score matrices, and
//! matrix-wide min-max normalization.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::minutia::MinutiaSet;

/// How the built-in matcher treats rare minutiae.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RareHandling {
    /// Seen as ridge-endings, i.e. as ordinary points.
    #[default]
    Demote,
    /// Not seen at all.
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub distance_tolerance: f64,
    pub angle_tolerance_deg: f64,
    /// Pairs longer than this are not tabulated.
    pub max_pair_distance: f64,
    pub rare: RareHandling,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            distance_tolerance: 10.0,
            angle_tolerance_deg: 20.0,
            max_pair_distance: 250.0,
            rare: RareHandling::Demote,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.distance_tolerance >= 0.0
            && (0.0..180.0).contains(&self.angle_tolerance_deg)
            && self.max_pair_distance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid matcher config: {self:?}")))
        }
    }
}

/// Signed difference `a - b` folded into `(-180, 180]`.
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// `angle_diff` for arguments already in `[-180, 180]`.
#[inline]
fn folded_diff(a: f32, b: f32) -> f32 {
    let d = a - b;
    if d > 180.0 {
        d - 360.0
    } else if d <= -180.0 {
        d + 360.0
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug)]
struct PairFeature {
    dist: f32,
    /// Orientation of the first minutia relative to the segment direction.
    beta1: f32,
    /// Orientation of the second minutia relative to the segment direction.
    beta2: f32,
    /// Direction of the segment from first to second minutia.
    phi: f32,
    /// First index below the second; one of the two orderings of a pair.
    canonical: bool,
}

/// Intra-set pair table holding both orderings of every pair, bucketed by
/// pair length and by the first relative angle.
#[derive(Clone, Debug)]
pub struct PairTable {
    pairs: Vec<PairFeature>,
    /// Bucket `(d, b)` is `pairs[offsets[d * n_beta + b]..offsets[d * n_beta + b + 1]]`.
    offsets: Vec<usize>,
    dist_width: f64,
    beta_width: f64,
    n_dist: usize,
    n_beta: usize,
    n_points: usize,
}

impl PairTable {
    pub fn new(set: &MinutiaSet, cfg: &MatcherConfig) -> Self {
        let pts: Vec<[f64; 3]> = set
            .minutiae()
            .iter()
            .filter(|m| !(m.is_rare() && cfg.rare == RareHandling::Drop))
            .map(|m| [m.x, m.y, m.theta])
            .collect();
        let mut pairs = Vec::new();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (pts[i], pts[j]);
                let dist = (b[0] - a[0]).hypot(b[1] - a[1]);
                if dist > cfg.max_pair_distance {
                    continue;
                }
                let phi = (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees();
                pairs.push(PairFeature {
                    dist: dist as f32,
                    beta1: angle_diff(a[2], phi) as f32,
                    beta2: angle_diff(b[2], phi) as f32,
                    phi: phi as f32,
                    canonical: i < j,
                });
            }
        }

        let dist_width = (cfg.distance_tolerance / 2.0).max(1.0);
        let beta_width = (cfg.angle_tolerance_deg / 2.0).max(1.0);
        let n_dist = (cfg.max_pair_distance / dist_width).floor() as usize + 1;
        let n_beta = (360.0 / beta_width).ceil() as usize;
        let bucket = |p: &PairFeature| {
            let d = ((p.dist as f64 / dist_width).floor() as usize).min(n_dist - 1);
            let b =
                (((p.beta1 as f64 + 180.0) / beta_width).floor() as i64).rem_euclid(n_beta as i64) as usize;
            d * n_beta + b
        };
        let keys: Vec<usize> = pairs.iter().map(bucket).collect();
        let mut offsets = vec![0; n_dist * n_beta + 1];
        for &k in &keys {
            offsets[k + 1] += 1;
        }
        for k in 1..offsets.len() {
            offsets[k] += offsets[k - 1];
        }
        let mut next = offsets.clone();
        let mut sorted = pairs.clone();
        for (p, &k) in pairs.iter().zip(&keys) {
            sorted[next[k]] = *p;
            next[k] += 1;
        }
        let pairs = sorted;
        Self {
            pairs,
            offsets,
            dist_width,
            beta_width,
            n_dist,
            n_beta,
            n_points: pts.len(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Calls `f` on every pair whose length lies within `dist_tol` of
    /// `dist` and whose first relative angle lies within `beta_tol` of
    /// `beta1`, plus possibly some others from the same buckets.
    fn for_candidates(
        &self,
        dist: f64,
        dist_tol: f64,
        beta1: f64,
        beta_tol: f64,
        mut f: impl FnMut(&PairFeature),
    ) {
        let hi = dist + dist_tol;
        if hi < 0.0 {
            return;
        }
        let d0 = (((dist - dist_tol).max(0.0) / self.dist_width).floor() as usize).min(self.n_dist - 1);
        let d1 = ((hi / self.dist_width).floor() as usize).min(self.n_dist - 1);
        let b0 = ((beta1 + 180.0 - beta_tol) / self.beta_width).floor() as i64;
        let b1 = ((beta1 + 180.0 + beta_tol) / self.beta_width).floor() as i64;
        let nb = self.n_beta as i64;
        let (b0, b1) = if b1 - b0 + 1 >= nb { (0, nb - 1) } else { (b0, b1) };
        for d in d0..=d1 {
            for b in b0..=b1 {
                let k = d * self.n_beta + b.rem_euclid(nb) as usize;
                self.pairs[self.offsets[k]..self.offsets[k + 1]]
                    .iter()
                    .for_each(&mut f);
            }
        }
    }
}

/// Raw pair-table score between two prepared sets.
///
/// Every latent pair is compared with every tenprint pair of similar length
/// and relative minutia angles. Each compatible match implies a global
/// rotation (the difference of segment directions); the score is the size
/// of the largest group of matches whose rotations agree within the angle
/// tolerance.
pub fn pair_table_score(latent: &PairTable, tenprint: &PairTable, cfg: &MatcherConfig) -> f64 {
    let tol = cfg.angle_tolerance_deg as f32;
    let dtol = cfg.distance_tolerance as f32;
    let mut rotations: Vec<f32> = Vec::new();
    // one ordering on the latent side against both on the tenprint side
    // visits every unordered match once
    for lp in latent.pairs.iter().filter(|p| p.canonical) {
        tenprint.for_candidates(lp.dist.into(), dtol.into(), lp.beta1.into(), tol.into(), |tp| {
            if (lp.dist - tp.dist).abs() <= dtol
                && folded_diff(lp.beta1, tp.beta1).abs() <= tol
                && folded_diff(lp.beta2, tp.beta2).abs() <= tol
            {
                rotations.push(folded_diff(tp.phi, lp.phi));
            }
        });
    }
    largest_consistent_group(&mut rotations, tol) as f64
}

/// Largest number of angles lying within `tol` of one of them, on the circle.
fn largest_consistent_group(angles: &mut [f32], tol: f32) -> usize {
    if angles.is_empty() {
        return 0;
    }
    angles.sort_unstable_by(f32::total_cmp);
    let n = angles.len();
    let at = |k: usize| {
        if k < n {
            angles[k]
        } else {
            angles[k - n] + 360.0
        }
    };
    // sliding window of width 2*tol over the doubled circle
    let mut best = 0;
    let mut end = 0;
    for start in 0..n {
        end = end.max(start);
        while end + 1 < start + n && at(end + 1) - at(start) <= 2.0 * tol {
            end += 1;
        }
        best = best.max(end - start + 1);
    }
    best
}

/// Raw score of the built-in matcher. Types are ignored; rare minutiae are
/// demoted or dropped per `cfg.rare`.
pub fn internal_match_score(latent: &MinutiaSet, tenprint: &MinutiaSet, cfg: &MatcherConfig) -> f64 {
    pair_table_score(&PairTable::new(latent, cfg), &PairTable::new(tenprint, cfg), cfg)
}

/// Dense latent × tenprint score matrix, rows are latents.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    latent_ids: Vec<String>,
    tenprint_ids: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(latent_ids: Vec<String>, tenprint_ids: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != latent_ids.len() * tenprint_ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores for a {}x{} matrix",
                scores.len(),
                latent_ids.len(),
                tenprint_ids.len()
            )));
        }
        if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite score at row {}, column {}",
                k / tenprint_ids.len(),
                k % tenprint_ids.len()
            )));
        }
        Ok(Self {
            latent_ids,
            tenprint_ids,
            scores,
        })
    }

    pub fn from_rows(
        latent_ids: Vec<String>,
        tenprint_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(r) = rows.iter().position(|r| r.len() != tenprint_ids.len()) {
            return Err(Error::InvalidInput(format!(
                "row {r} has {} entries, expected {}",
                rows[r].len(),
                tenprint_ids.len()
            )));
        }
        Self::new(latent_ids, tenprint_ids, rows.concat())
    }

    pub fn latent_ids(&self) -> &[String] {
        &self.latent_ids
    }

    pub fn tenprint_ids(&self) -> &[String] {
        &self.tenprint_ids
    }

    pub fn n_latents(&self) -> usize {
        self.latent_ids.len()
    }

    pub fn n_tenprints(&self) -> usize {
        self.tenprint_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.tenprint_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.tenprint_ids.len();
        &self.scores[row * w..(row + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    /// Same ids, entries replaced by `f(row, col, value)`.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let w = self.tenprint_ids.len().max(1);
        let scores = self
            .scores
            .iter()
            .enumerate()
            .map(|(k, &s)| f(k / w, k % w, s))
            .collect();
        Self {
            latent_ids: self.latent_ids.clone(),
            tenprint_ids: self.tenprint_ids.clone(),
            scores,
        }
    }

    /// Submatrix with the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let scores = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Self {
            latent_ids: rows.iter().map(|&r| self.latent_ids[r].clone()).collect(),
            tenprint_ids: cols.iter().map(|&c| self.tenprint_ids[c].clone()).collect(),
            scores,
        }
    }

    /// Reorders rows and columns to the dataset's subject order. Both id
    /// lists must be exactly the dataset's subject ids.
    pub fn aligned_to(&self, dataset: &Dataset, origin: &Path) -> Result<Self> {
        let ids = dataset.ids();
        let order = |found: &[String], what: &str| -> Result<Vec<usize>> {
            let index: HashMap<&str, usize> =
                found.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let missing: Vec<&str> = ids
                .iter()
                .filter(|id| !index.contains_key(id.as_str()))
                .map(String::as_str)
                .collect();
            if !missing.is_empty() || found.len() != ids.len() {
                let extra: Vec<&str> = found
                    .iter()
                    .filter(|f| !ids.contains(f))
                    .map(String::as_str)
                    .collect();
                return Err(Error::parse(
                    origin,
                    what,
                    format!("ids do not match the dataset (missing {missing:?}, unexpected {extra:?})"),
                ));
            }
            Ok(ids.iter().map(|id| index[id.as_str()]).collect())
        };
        let rows = order(&self.latent_ids, "latent ids (first column)")?;
        let cols = order(&self.tenprint_ids, "tenprint ids (header)")?;
        Ok(self.select(&rows, &cols))
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("latent_id").chain(self.tenprint_ids.iter().map(String::as_str));
        w.write_record(header).expect("in-memory write");
        for (r, id) in self.latent_ids.iter().enumerate() {
            let row = std::iter::once(id.clone()).chain(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 ids")
    }
}

/// Built-in matcher scores for every latent against every tenprint, with
/// subject ids on both axes.
pub fn internal_score_matrix(dataset: &Dataset, cfg: &MatcherConfig) -> ScoreMatrix {
    let subjects = dataset.subjects();
    let tenprints: Vec<PairTable> = subjects
        .par_iter()
        .map(|s| PairTable::new(&s.tenprint, cfg))
        .collect();
    let scores: Vec<f64> = subjects
        .par_iter()
        .flat_map_iter(|s| {
            let latent = PairTable::new(&s.latent, cfg);
            tenprints
                .iter()
                .map(|t| pair_table_score(&latent, t, cfg))
                .collect::<Vec<_>>()
        })
        .collect();
    let ids = dataset.ids();
    ScoreMatrix::new(ids.clone(), ids, scores).expect("finite counts")
}

/// Parses a score-matrix CSV: header `latent_id,<tenprint ids...>`, then one
/// row per latent.
pub fn parse_external_scores(text: &str, origin: &Path) -> Result<ScoreMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::parse(origin, "header", e.to_string()))?,
        None => return Err(Error::parse(origin, "header", "empty file")),
    };
    if header.get(0).map(str::trim) != Some("latent_id") {
        return Err(Error::parse(origin, "header", "first cell must be \"latent_id\""));
    }
    let tenprint_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if tenprint_ids.is_empty() {
        return Err(Error::parse(origin, "header", "no tenprint ids"));
    }
    let mut latent_ids = Vec::new();
    let mut scores = Vec::new();
    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(origin, format!("row {line}"), e.to_string()))?;
        if rec.len() != tenprint_ids.len() + 1 {
            return Err(Error::parse(
                origin,
                format!("row {line}"),
                format!("{} cells, expected {}", rec.len(), tenprint_ids.len() + 1),
            ));
        }
        latent_ids.push(rec[0].trim().to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let ctx = || format!("row {line}, column {} ({})", c + 1, tenprint_ids[c - 1]);
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, ctx(), format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, ctx(), format!("non-finite value {cell:?}")));
            }
            scores.push(v);
        }
    }
    if latent_ids.is_empty() {
        return Err(Error::parse(origin, "body", "no score rows"));
    }
    ScoreMatrix::new(latent_ids, tenprint_ids, scores)
        .map_err(|e| Error::parse(origin, "matrix", e.to_string()))
}

pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_scores(&text, path)
}

/// Loads an external matrix and reorders it to the dataset's subject order.
pub fn load_external_scores_for(path: impl AsRef<Path>, dataset: &Dataset) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    load_external_scores(path)?.aligned_to(dataset, path)
}

/// Min-max over the whole matrix; a constant matrix maps to 0.5.
pub fn normalize_scores(m: &ScoreMatrix) -> ScoreMatrix {
    let (lo, hi) = m
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    if hi <= lo {
        return m.map(|_, _, _| 0.5);
    }
    let span = hi - lo;
    m.map(|_, _, s| ((s - lo) / span).clamp(0.0, 1.0))
}
