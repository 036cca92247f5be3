//! Synthetic latent/tenprint pairs calibrated to forensic casework statistics.
//!
//! Each tenprint is a uniform scatter of minutiae with a minimum spacing and
//! types drawn from a configured distribution. Its latent is a contiguous
//! patch of the tenprint, perturbed by positional and angular jitter, moved
//! by a global rigid transform, and with rare features occasionally lost or
//! labelled as typical.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minutia::{
    collapse_multipoint, wrap_degrees, Minutia, MinutiaSet, MinutiaType, RawPoint, SetKind,
};

use super::{Dataset, Subject, DEFAULT_RESOLUTION_PPI, GCDB_LATENT_TYPE_COUNTS};

const MIN_SPACING: f64 = 8.0;
/// Keeps multi-point markings inside the positive quadrant.
const BORDER: f64 = 5.0;
/// Half-width of the square in which the points of a multi-point feature lie.
const MARKING_SPREAD: f64 = 4.0;
const MIN_LATENT: usize = 4;
const MIN_TENPRINT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_subjects: usize,
    pub tenprint_minutiae_mean: f64,
    pub latent_minutiae_mean: f64,
    /// Width and height of the tenprint area in pixels.
    pub area: [f64; 2],
    pub position_jitter_sigma: f64,
    pub angle_jitter_sigma: f64,
    /// Latent rotation is uniform in `[-rotation_range_deg, rotation_range_deg]`.
    pub rotation_range_deg: f64,
    /// Probability of each type code, indexed by code − 1.
    pub type_distribution: [f64; 15],
    pub rare_dropout_prob: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let total: u64 = GCDB_LATENT_TYPE_COUNTS.iter().sum();
        Self {
            n_subjects: 150,
            tenprint_minutiae_mean: 125.0,
            latent_minutiae_mean: 13.0,
            area: [400.0, 400.0],
            position_jitter_sigma: 3.0,
            angle_jitter_sigma: 5.0,
            rotation_range_deg: 45.0,
            type_distribution: GCDB_LATENT_TYPE_COUNTS.map(|c| c as f64 / total as f64),
            rare_dropout_prob: 0.1,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if !(self.latent_minutiae_mean > 0.0 && self.latent_minutiae_mean < self.tenprint_minutiae_mean) {
            return fail(format!(
                "latent mean {} must be positive and below tenprint mean {}",
                self.latent_minutiae_mean, self.tenprint_minutiae_mean
            ));
        }
        if !self.tenprint_minutiae_mean.is_finite() {
            return fail("tenprint mean must be finite".into());
        }
        if !(self.area[0] > 2.0 * BORDER && self.area[1] > 2.0 * BORDER) {
            return fail(format!("area {:?} too small", self.area));
        }
        if !(self.position_jitter_sigma >= 0.0 && self.angle_jitter_sigma >= 0.0) {
            return fail("jitter sigmas must be non-negative".into());
        }
        if !(0.0..=180.0).contains(&self.rotation_range_deg) {
            return fail(format!(
                "rotation range {} outside [0, 180]",
                self.rotation_range_deg
            ));
        }
        if !(0.0..=1.0).contains(&self.rare_dropout_prob) {
            return fail(format!(
                "dropout probability {} outside [0, 1]",
                self.rare_dropout_prob
            ));
        }
        if self
            .type_distribution
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            return fail("type probabilities must be finite and non-negative".into());
        }
        let sum: f64 = self.type_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return fail(format!("type probabilities sum to {sum}, not 1"));
        }
        Ok(())
    }
}

/// Generates a dataset; identical parameters give an identical dataset.
pub fn gen_synthetic(params: &SynthParams) -> Result<Dataset> {
    params.validate()?;
    let types = WeightedIndex::new(params.type_distribution)
        .map_err(|e| Error::Validation(format!("type distribution: {e}")))?;
    let width = (params.n_subjects.max(1)).to_string().len().max(3);
    let subjects = (0..params.n_subjects)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let id = format!("s{:0width$}", i + 1);
            gen_subject(&mut rng, id, params, &types)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(DEFAULT_RESOLUTION_PPI, Some(params.seed), subjects)
}

fn sample_count(rng: &mut ChaCha8Rng, mean: f64, min: usize) -> usize {
    let n: f64 = Poisson::new(mean).expect("mean validated positive").sample(rng);
    (n as usize).max(min)
}

fn gen_subject(
    rng: &mut ChaCha8Rng,
    id: String,
    params: &SynthParams,
    types: &WeightedIndex<f64>,
) -> Result<Subject> {
    let n_tenprint = sample_count(rng, params.tenprint_minutiae_mean, MIN_TENPRINT);
    let n_latent = sample_count(rng, params.latent_minutiae_mean, MIN_LATENT).min(n_tenprint);

    let locations = scatter(rng, n_tenprint, params.area)?;
    let tenprint: Vec<Minutia> = locations
        .iter()
        .map(|&[x, y]| {
            let mtype = MinutiaType::ALL[types.sample(rng)];
            let theta = rng.random_range(0.0..360.0);
            marked_minutia(rng, x, y, theta, mtype)
        })
        .collect();

    // contiguous patch around a random seed minutia
    let centre = locations[rng.random_range(0..n_tenprint)];
    let mut order: Vec<usize> = (0..n_tenprint).collect();
    order.sort_by(|&a, &b| {
        let da = (locations[a][0] - centre[0]).hypot(locations[a][1] - centre[1]);
        let db = (locations[b][0] - centre[0]).hypot(locations[b][1] - centre[1]);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    order.truncate(n_latent);
    order.shuffle(rng);

    let pos = Normal::new(0.0, params.position_jitter_sigma).expect("sigma validated");
    let ang = Normal::new(0.0, params.angle_jitter_sigma).expect("sigma validated");
    let mut latent: Vec<Minutia> = Vec::with_capacity(n_latent);
    for &i in &order {
        let mut m = jitter(rng, &tenprint[i], &pos, &ang);
        if m.is_rare() && rng.random_bool(params.rare_dropout_prob) {
            if rng.random_bool(0.5) {
                continue;
            }
            m.mtype = if rng.random_bool(0.5) {
                MinutiaType::RidgeEnding
            } else {
                MinutiaType::Bifurcation
            };
            m.raw_points = None;
        }
        latent.push(m);
    }
    if latent.is_empty() {
        // every minutia was a dropped rare feature; keep one, demoted
        let mut m = jitter(rng, &tenprint[order[0]], &pos, &ang);
        m.mtype = MinutiaType::RidgeEnding;
        m.raw_points = None;
        latent.push(m);
    }

    let rotation = if params.rotation_range_deg > 0.0 {
        rng.random_range(-params.rotation_range_deg..=params.rotation_range_deg)
    } else {
        0.0
    };
    let offset = [rng.random_range(10.0..60.0), rng.random_range(10.0..60.0)];
    let latent = rigid_move(latent, rotation, offset);

    let tenprint = MinutiaSet::new(format!("{id}/tenprint"), SetKind::Tenprint, tenprint)?;
    let latent = MinutiaSet::new(format!("{id}/latent"), SetKind::Latent, latent)?;
    Ok(Subject::new(id, latent, tenprint))
}

/// Uniform locations with pairwise spacing of at least `MIN_SPACING`.
fn scatter(rng: &mut ChaCha8Rng, n: usize, area: [f64; 2]) -> Result<Vec<[f64; 2]>> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    let max_attempts = 200 * n + 1000;
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Generation(format!(
                "could not place {n} minutiae {MIN_SPACING} px apart in a {}x{} area",
                area[0], area[1]
            )));
        }
        let p = [
            rng.random_range(BORDER..area[0] - BORDER),
            rng.random_range(BORDER..area[1] - BORDER),
        ];
        if out
            .iter()
            .all(|q| (q[0] - p[0]).hypot(q[1] - p[1]) >= MIN_SPACING)
        {
            out.push(p);
        }
    }
    Ok(out)
}

/// A minutia at `(x, y)`; multi-point types get marked points centred on it.
fn marked_minutia(rng: &mut ChaCha8Rng, x: f64, y: f64, theta: f64, mtype: MinutiaType) -> Minutia {
    let k = mtype.marking_points();
    if k == 1 {
        return Minutia::new(x, y, theta, mtype);
    }
    let mut offsets: Vec<[f64; 2]> = (0..k)
        .map(|_| {
            [
                rng.random_range(-MARKING_SPREAD..MARKING_SPREAD),
                rng.random_range(-MARKING_SPREAD..MARKING_SPREAD),
            ]
        })
        .collect();
    let mx = offsets.iter().map(|o| o[0]).sum::<f64>() / k as f64;
    let my = offsets.iter().map(|o| o[1]).sum::<f64>() / k as f64;
    for o in &mut offsets {
        o[0] -= mx;
        o[1] -= my;
    }
    let raw: Vec<RawPoint> = offsets
        .iter()
        .map(|o| {
            [
                x + o[0],
                y + o[1],
                wrap_degrees(theta + rng.random_range(-10.0..10.0)),
            ]
        })
        .collect();
    collapse_multipoint(&raw, mtype).expect("non-empty marking")
}

fn jitter(rng: &mut ChaCha8Rng, m: &Minutia, pos: &Normal<f64>, ang: &Normal<f64>) -> Minutia {
    match &m.raw_points {
        Some(raw) => {
            let raw: Vec<RawPoint> = raw
                .iter()
                .map(|p| {
                    [
                        p[0] + pos.sample(rng),
                        p[1] + pos.sample(rng),
                        wrap_degrees(p[2] + ang.sample(rng)),
                    ]
                })
                .collect();
            collapse_multipoint(&raw, m.mtype).expect("non-empty marking")
        }
        None => Minutia::new(
            m.x + pos.sample(rng),
            m.y + pos.sample(rng),
            wrap_degrees(m.theta + ang.sample(rng)),
            m.mtype,
        ),
    }
}

/// Rotates about the centroid, then translates so the bounding box starts at
/// `offset`. Multi-point features are re-collapsed from their moved points.
fn rigid_move(latent: Vec<Minutia>, rotation_deg: f64, offset: [f64; 2]) -> Vec<Minutia> {
    let n = latent.len() as f64;
    let cx = latent.iter().map(|m| m.x).sum::<f64>() / n;
    let cy = latent.iter().map(|m| m.y).sum::<f64>() / n;
    let (s, c) = rotation_deg.to_radians().sin_cos();
    let rot = |x: f64, y: f64| [cx + c * (x - cx) - s * (y - cy), cy + s * (x - cx) + c * (y - cy)];

    let rotated: Vec<Minutia> = latent
        .into_iter()
        .map(|m| match &m.raw_points {
            Some(raw) => {
                let raw: Vec<RawPoint> = raw
                    .iter()
                    .map(|p| {
                        let [x, y] = rot(p[0], p[1]);
                        [x, y, wrap_degrees(p[2] + rotation_deg)]
                    })
                    .collect();
                collapse_multipoint(&raw, m.mtype).expect("non-empty marking")
            }
            None => {
                let [x, y] = rot(m.x, m.y);
                Minutia::new(x, y, wrap_degrees(m.theta + rotation_deg), m.mtype)
            }
        })
        .collect();

    let min_x = rotated
        .iter()
        .flat_map(|m| std::iter::once(m.x).chain(m.raw_points.iter().flatten().map(|p| p[0])))
        .fold(f64::INFINITY, f64::min);
    let min_y = rotated
        .iter()
        .flat_map(|m| std::iter::once(m.y).chain(m.raw_points.iter().flatten().map(|p| p[1])))
        .fold(f64::INFINITY, f64::min);
    let (dx, dy) = (offset[0] - min_x, offset[1] - min_y);
    rotated
        .into_iter()
        .map(|m| match &m.raw_points {
            Some(raw) => {
                let raw: Vec<RawPoint> = raw.iter().map(|p| [p[0] + dx, p[1] + dy, p[2]]).collect();
                collapse_multipoint(&raw, m.mtype).expect("non-empty marking")
            }
            None => Minutia::new(m.x + dx, m.y + dy, m.theta, m.mtype),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{fitting_error, AlignmentConfig};

    fn small(seed: u64) -> SynthParams {
        SynthParams {
            n_subjects: 20,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = gen_synthetic(&small(7)).unwrap();
        let b = gen_synthetic(&small(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json_string(), b.to_json_string());
        let c = gen_synthetic(&small(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_latents_are_rigid_subsets() {
        let params = SynthParams {
            n_subjects: 40,
            position_jitter_sigma: 0.0,
            angle_jitter_sigma: 0.0,
            rare_dropout_prob: 0.0,
            seed: 3,
            ..Default::default()
        };
        let d = gen_synthetic(&params).unwrap();
        let cfg = AlignmentConfig::default();
        let mut fitted = 0;
        for s in d.subjects().iter().filter(|s| s.has_rare) {
            let e = fitting_error(&s.latent, &s.tenprint, &cfg).expect("genuine anchor exists");
            assert!(e < 1e-6, "{}: E = {e}", s.id);
            fitted += 1;
        }
        assert!(fitted > 10);
    }

    #[test]
    fn zero_dropout_keeps_every_rare_type() {
        let params = SynthParams {
            rare_dropout_prob: 0.0,
            ..small(11)
        };
        let d = gen_synthetic(&params).unwrap();
        for s in d.subjects() {
            // every rare latent minutia has a same-type counterpart
            for m in s.latent.minutiae().iter().filter(|m| m.is_rare()) {
                assert!(s.tenprint.minutiae().iter().any(|t| t.mtype == m.mtype));
            }
        }
    }

    #[test]
    fn spacing_and_bounds() {
        let d = gen_synthetic(&small(5)).unwrap();
        for s in d.subjects() {
            let t = s.tenprint.minutiae();
            for i in 0..t.len() {
                assert!(t[i].x >= 0.0 && t[i].x < 400.0 && t[i].y >= 0.0 && t[i].y < 400.0);
                for j in i + 1..t.len() {
                    assert!((t[i].x - t[j].x).hypot(t[i].y - t[j].y) >= MIN_SPACING - 1e-9);
                }
            }
            assert!(s.latent.len() <= s.tenprint.len());
        }
    }

    #[test]
    fn multipoint_features_carry_raw_points() {
        let mut dist = [0.0; 15];
        dist[0] = 0.5;
        dist[2] = 0.25;
        dist[12] = 0.25;
        let params = SynthParams {
            type_distribution: dist,
            ..small(2)
        };
        let d = gen_synthetic(&params).unwrap();
        let mut seen = 0;
        for s in d.subjects() {
            for m in s.tenprint.minutiae().iter().chain(s.latent.minutiae()) {
                match m.mtype {
                    MinutiaType::Deviation => assert_eq!(m.raw_points.as_ref().unwrap().len(), 2),
                    MinutiaType::Assemble => assert_eq!(m.raw_points.as_ref().unwrap().len(), 3),
                    _ => assert!(m.raw_points.is_none()),
                }
                seen += m.raw_points.is_some() as usize;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn crowded_area_fails() {
        let params = SynthParams {
            area: [40.0, 40.0],
            ..small(1)
        };
        assert!(matches!(gen_synthetic(&params), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            SynthParams {
                latent_minutiae_mean: 200.0,
                ..Default::default()
            },
            SynthParams {
                rare_dropout_prob: 1.5,
                ..Default::default()
            },
            SynthParams {
                type_distribution: [0.1; 15],
                ..Default::default()
            },
            SynthParams {
                position_jitter_sigma: -1.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }
}
