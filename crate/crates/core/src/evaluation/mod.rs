//! Identification experiments: fitting-error densities, CMC curves for the
//! baseline, fused and threshold-modified scores, and the threshold sweep,
//! on the rare-feature subset and on the full set.

mod report;
mod svg;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{fitting_error_prepared, AlignmentConfig, PreparedTenprint};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::fusion::{FusionParams, ScoreRecord};
use crate::matcher::{internal_score_matrix, normalize_scores, MatcherConfig, ScoreMatrix};

pub use report::{write_report, REPORT_FILES};

/// Rank-k identification rates; `accuracies[k - 1]` is the Rank-k rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CmcCurve {
    pub accuracies: Vec<f64>,
    pub n_latents: usize,
    pub gallery_size: usize,
}

impl CmcCurve {
    /// Curve from 1-based mate ranks.
    pub fn from_ranks(ranks: &[usize], gallery_size: usize) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::InvalidInput("CMC over zero latents".into()));
        }
        if let Some(r) = ranks.iter().find(|&&r| r == 0 || r > gallery_size) {
            return Err(Error::InvalidInput(format!(
                "rank {r} outside 1..={gallery_size}"
            )));
        }
        let mut hits = vec![0usize; gallery_size];
        for &r in ranks {
            hits[r - 1] += 1;
        }
        let n = ranks.len() as f64;
        let mut cumulative = 0;
        let accuracies = hits
            .into_iter()
            .map(|h| {
                cumulative += h;
                cumulative as f64 / n
            })
            .collect();
        Ok(Self {
            accuracies,
            n_latents: ranks.len(),
            gallery_size,
        })
    }

    /// Rank-k rate, `k >= 1`; ranks past the gallery size give the final rate.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks start at 1");
        self.accuracies[(k - 1).min(self.accuracies.len() - 1)]
    }

    pub fn rank1(&self) -> f64 {
        self.rank(1)
    }

    pub fn is_monotone(&self) -> bool {
        self.accuracies.windows(2).all(|w| w[0] <= w[1])
    }

    /// Holds when every latent's mate is in the gallery.
    pub fn reaches_one(&self) -> bool {
        self.accuracies.last() == Some(&1.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,accuracy\n");
        for (k, a) in self.accuracies.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, a));
        }
        out
    }
}

/// Rank of the mate within a row: one plus the number of other entries
/// scoring at least as high, so the mate loses every tie.
pub fn mate_rank(row: &[f64], mate: usize) -> usize {
    let s = row[mate];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &v)| j != mate && v >= s)
        .count()
}

/// Column of each row's mate.
pub fn mate_columns(matrix: &ScoreMatrix, mates: &HashMap<String, String>) -> Result<Vec<usize>> {
    let col: HashMap<&str, usize> = matrix
        .tenprint_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();
    matrix
        .latent_ids()
        .iter()
        .map(|l| {
            let m = mates
                .get(l)
                .ok_or_else(|| Error::InvalidInput(format!("no mate given for latent '{l}'")))?;
            col.get(m.as_str()).copied().ok_or_else(|| {
                Error::InvalidInput(format!("mate '{m}' of latent '{l}' is not in the gallery"))
            })
        })
        .collect()
}

pub fn cmc(matrix: &ScoreMatrix, mates: &HashMap<String, String>) -> Result<CmcCurve> {
    let cols = mate_columns(matrix, mates)?;
    let ranks: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, &c)| mate_rank(matrix.row(i), c))
        .collect();
    CmcCurve::from_ranks(&ranks, matrix.n_tenprints())
}

/// Each id mated with itself, as in matrices indexed by subject id.
pub fn identity_mates<'a>(ids: impl IntoIterator<Item = &'a String>) -> HashMap<String, String> {
    ids.into_iter().map(|id| (id.clone(), id.clone())).collect()
}

/// Normalized Ê histograms for genuine and impostor comparisons.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorDensity {
    pub bins: usize,
    /// Mass per bin, summing to 1.
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

/// Bin of a value in `[0, 1]`; 1.0 falls in the last bin.
pub fn density_bin(value: f64, bins: usize) -> usize {
    ((value * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

pub fn error_density(records: &[ScoreRecord], bins: usize) -> Result<ErrorDensity> {
    if bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let mut genuine = vec![0usize; bins];
    let mut impostor = vec![0usize; bins];
    for r in records {
        let h = if r.is_genuine { &mut genuine } else { &mut impostor };
        h[density_bin(r.e_hat, bins)] += 1;
    }
    let n_genuine: usize = genuine.iter().sum();
    let n_impostor: usize = impostor.iter().sum();
    if n_genuine == 0 {
        return Err(Error::EmptyClass("no genuine comparisons".into()));
    }
    if n_impostor == 0 {
        return Err(Error::EmptyClass("no impostor comparisons".into()));
    }
    let norm = |h: Vec<usize>, n: usize| h.into_iter().map(|c| c as f64 / n as f64).collect();
    Ok(ErrorDensity {
        bins,
        genuine: norm(genuine, n_genuine),
        impostor: norm(impostor, n_impostor),
        n_genuine,
        n_impostor,
    })
}

/// Lowest bin holding the largest mass.
fn mode(h: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in h.iter().enumerate() {
        if v > h[best] {
            best = k;
        }
    }
    best
}

impl ErrorDensity {
    pub fn genuine_mode(&self) -> usize {
        mode(&self.genuine)
    }

    pub fn impostor_mode(&self) -> usize {
        mode(&self.impostor)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,genuine,impostor\n");
        let w = 1.0 / self.bins as f64;
        for k in 0..self.bins {
            out.push_str(&format!(
                "{},{},{},{}\n",
                k as f64 * w,
                (k + 1) as f64 * w,
                self.genuine[k],
                self.impostor[k]
            ));
        }
        out
    }
}

/// Probability that a random genuine value exceeds a random impostor value,
/// ties counting one half.
pub fn mann_whitney_auc(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyClass("AUC needs both classes".into()));
    }
    let mut imp = impostor.to_vec();
    imp.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &g in genuine {
        let below = imp.partition_point(|&v| v < g);
        let tied = imp.partition_point(|&v| v <= g) - below;
        wins += below as f64 + 0.5 * tied as f64;
    }
    Ok(wins / (genuine.len() as f64 * impostor.len() as f64))
}

/// Latents × gallery comparison records with known mates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreTable {
    pub latent_ids: Vec<String>,
    pub tenprint_ids: Vec<String>,
    /// Row-major, rows are latents.
    pub records: Vec<ScoreRecord>,
    /// Column of each row's mate.
    pub mates: Vec<usize>,
}

impl ScoreTable {
    pub fn new(
        latent_ids: Vec<String>,
        tenprint_ids: Vec<String>,
        records: Vec<ScoreRecord>,
        mates: Vec<usize>,
    ) -> Result<Self> {
        if records.len() != latent_ids.len() * tenprint_ids.len() || mates.len() != latent_ids.len() {
            return Err(Error::InvalidInput("score table dimensions disagree".into()));
        }
        if mates.iter().any(|&m| m >= tenprint_ids.len()) {
            return Err(Error::InvalidInput("mate column outside the gallery".into()));
        }
        Ok(Self {
            latent_ids,
            tenprint_ids,
            records,
            mates,
        })
    }

    pub fn n_latents(&self) -> usize {
        self.latent_ids.len()
    }

    pub fn gallery_size(&self) -> usize {
        self.tenprint_ids.len()
    }

    pub fn row(&self, i: usize) -> &[ScoreRecord] {
        let w = self.gallery_size();
        &self.records[i * w..(i + 1) * w]
    }

    /// Matrix of one score field.
    pub fn matrix(&self, f: impl Fn(&ScoreRecord) -> f64) -> ScoreMatrix {
        ScoreMatrix::new(
            self.latent_ids.clone(),
            self.tenprint_ids.clone(),
            self.records.iter().map(f).collect(),
        )
        .expect("scores are finite")
    }

    /// Mate ranks of the given rows under a score function.
    pub fn ranks(&self, rows: &[usize], f: impl Fn(&ScoreRecord) -> f64) -> Vec<usize> {
        let mut buf = Vec::with_capacity(self.gallery_size());
        rows.iter()
            .map(|&i| {
                buf.clear();
                buf.extend(self.row(i).iter().map(&f));
                mate_rank(&buf, self.mates[i])
            })
            .collect()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_latents()).collect()
    }

    pub fn cmc(&self, f: impl Fn(&ScoreRecord) -> f64) -> Result<CmcCurve> {
        CmcCurve::from_ranks(&self.ranks(&self.all_rows(), f), self.gallery_size())
    }

    pub fn rank1(&self, rows: &[usize], f: impl Fn(&ScoreRecord) -> f64) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let ranks = self.ranks(rows, f);
        ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub thresholds: Vec<f64>,
    pub rank1: Vec<f64>,
    /// Threshold with the highest Rank-1, the smallest among equals.
    pub best_e_t: f64,
    pub best_rank1: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("e_t,rank1\n");
        for (t, r) in self.thresholds.iter().zip(&self.rank1) {
            out.push_str(&format!("{t},{r}\n"));
        }
        out
    }
}

/// `lo, lo + step, ...` up to `hi` inclusive, each rounded to 1e-9.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && lo <= hi) {
        return Err(Error::InvalidInput(format!(
            "bad sweep range [{lo}, {hi}] step {step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Rank-1 of S″ on `rows` for every threshold in the grid.
pub fn sweep_threshold_rows(
    table: &ScoreTable,
    rows: &[usize],
    base: &FusionParams,
    thresholds: &[f64],
) -> Result<SweepResult> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    let rank1: Vec<f64> = thresholds
        .par_iter()
        .map(|&t| {
            let p = base.with_threshold(t);
            table.rank1(rows, |r| r.rescored(&p))
        })
        .collect();
    let mut best = 0;
    for k in 1..rank1.len() {
        if rank1[k] > rank1[best] {
            best = k;
        }
    }
    Ok(SweepResult {
        best_e_t: thresholds[best],
        best_rank1: rank1[best],
        thresholds: thresholds.to_vec(),
        rank1,
    })
}

pub fn sweep_threshold(
    table: &ScoreTable,
    base: &FusionParams,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<SweepResult> {
    sweep_threshold_rows(table, &table.all_rows(), base, &threshold_grid(lo, hi, step)?)
}

/// Source of the baseline matcher score.
#[derive(Clone, Debug)]
pub enum MatcherChoice {
    Internal(MatcherConfig),
    /// Raw scores already ordered like the dataset's subjects.
    External(ScoreMatrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    pub density_bins: usize,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_step: f64,
    /// Tune e_t on even-position rare latents and report it on the others.
    pub holdout: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            density_bins: 50,
            sweep_min: 0.8,
            sweep_max: 1.0,
            sweep_step: 0.005,
            holdout: false,
        }
    }
}

/// Rank-1 rates of one scope, in the shape of a results table row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rank1Row {
    pub scope: String,
    pub n_latents: usize,
    pub gallery_size: usize,
    pub baseline: f64,
    pub fused: f64,
    pub modified: f64,
    /// Threshold used for `modified`.
    pub e_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curves {
    pub baseline: CmcCurve,
    pub fused: CmcCurve,
    pub modified: CmcCurve,
}

impl Curves {
    pub fn all(&self) -> [&CmcCurve; 3] {
        [&self.baseline, &self.fused, &self.modified]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoldoutResult {
    pub tuning_latents: usize,
    pub sweep: SweepResult,
    pub evaluation: Rank1Row,
}

/// Results on the latents that carry rare minutiae, against their own
/// tenprints as gallery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetReport {
    #[serde(skip)]
    pub table: ScoreTable,
    pub curves: Curves,
    /// S″ at the best swept threshold.
    pub modified_at_best: CmcCurve,
    pub sweep: SweepResult,
    /// Absent when one class has no comparisons.
    pub density: Option<ErrorDensity>,
    pub auc: Option<f64>,
    pub holdout: Option<HoldoutResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub alignment: AlignmentConfig,
    pub fusion: FusionParams,
    pub options: EvaluationOptions,
    pub n_subjects: usize,
    pub n_rare: usize,
    /// Absent when no latent carries a rare minutia.
    pub rare: Option<SubsetReport>,
    /// All latents against all tenprints; latents without rare minutiae
    /// keep the baseline score.
    pub full: Curves,
    pub rank1: Vec<Rank1Row>,
}

impl Report {
    pub fn curves(&self) -> impl Iterator<Item = &CmcCurve> {
        let rare = self.rare.iter().flat_map(|r| {
            r.curves
                .all()
                .into_iter()
                .chain(std::iter::once(&r.modified_at_best))
        });
        self.full.all().into_iter().chain(rare)
    }
}

/// Normalized baseline scores in subject order.
pub fn baseline_scores(dataset: &Dataset, matcher: &MatcherChoice) -> Result<ScoreMatrix> {
    let raw = match matcher {
        MatcherChoice::Internal(cfg) => {
            cfg.validate()?;
            internal_score_matrix(dataset, cfg)
        }
        MatcherChoice::External(m) => {
            let ids = dataset.ids();
            if m.latent_ids() != ids.as_slice() || m.tenprint_ids() != ids.as_slice() {
                return Err(Error::InvalidInput(
                    "external score matrix is not ordered like the dataset".into(),
                ));
            }
            m.clone()
        }
    };
    Ok(normalize_scores(&raw))
}

/// Runs the three experiments on a dataset.
pub fn evaluate_full(
    dataset: &Dataset,
    matcher: &MatcherChoice,
    cfg: &AlignmentConfig,
    params: &FusionParams,
    opts: &EvaluationOptions,
) -> Result<Report> {
    cfg.validate()?;
    params.validate()?;
    let thresholds = threshold_grid(opts.sweep_min, opts.sweep_max, opts.sweep_step)?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("dataset has no subjects".into()));
    }
    let s_m = baseline_scores(dataset, matcher)?;
    let subjects = dataset.subjects();
    let ids = dataset.ids();
    let n = subjects.len();
    let rare_rows: Vec<usize> = (0..n).filter(|&i| subjects[i].has_rare).collect();

    // fitted scores for every rare latent against the whole gallery
    let prepared: Vec<PreparedTenprint> = subjects
        .iter()
        .map(|s| PreparedTenprint::new(&s.tenprint))
        .collect();
    let fused_rows: Vec<Vec<ScoreRecord>> = rare_rows
        .par_iter()
        .map(|&i| {
            prepared
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    let e = fitting_error_prepared(&subjects[i].latent, t, cfg);
                    ScoreRecord::from_parts(&ids[i], &ids[j], s_m.get(i, j), e, cfg, params, i == j)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // full set: rare latents fused, the rest on the baseline alone
    let mut rare_pos = vec![None; n];
    for (k, &i) in rare_rows.iter().enumerate() {
        rare_pos[i] = Some(k);
    }
    let mut full_records = Vec::with_capacity(n * n);
    for i in 0..n {
        match rare_pos[i] {
            Some(k) => full_records.extend(fused_rows[k].iter().cloned()),
            None => full_records.extend((0..n).map(|j| {
                let s = s_m.get(i, j);
                ScoreRecord {
                    latent_id: ids[i].clone(),
                    tenprint_id: ids[j].clone(),
                    s_m: s,
                    e_hat: f64::NAN,
                    fitting_error: None,
                    s_prime: s,
                    s_double_prime: s,
                    is_genuine: i == j,
                }
            })),
        }
    }
    let full_table = ScoreTable::new(ids.clone(), ids.clone(), full_records, (0..n).collect())?;
    let full = Curves {
        baseline: full_table.cmc(|r| r.s_m)?,
        fused: full_table.cmc(|r| r.s_prime)?,
        modified: full_table.cmc(|r| r.s_double_prime)?,
    };
    let mut rank1 = Vec::new();

    let rare = if rare_rows.is_empty() {
        None
    } else {
        let sub_ids: Vec<String> = rare_rows.iter().map(|&i| ids[i].clone()).collect();
        let records: Vec<ScoreRecord> = fused_rows
            .iter()
            .flat_map(|row| rare_rows.iter().map(move |&j| row[j].clone()))
            .collect();
        let m = rare_rows.len();
        let table = ScoreTable::new(sub_ids.clone(), sub_ids, records, (0..m).collect())?;
        let curves = Curves {
            baseline: table.cmc(|r| r.s_m)?,
            fused: table.cmc(|r| r.s_prime)?,
            modified: table.cmc(|r| r.s_double_prime)?,
        };
        let sweep = sweep_threshold_rows(&table, &table.all_rows(), params, &thresholds)?;
        let best = params.with_threshold(sweep.best_e_t);
        let modified_at_best = table.cmc(|r| r.rescored(&best))?;
        let density = match error_density(&table.records, opts.density_bins) {
            Ok(d) => Some(d),
            Err(Error::EmptyClass(_)) => None,
            Err(e) => return Err(e),
        };
        let (genuine, impostor): (Vec<&ScoreRecord>, Vec<&ScoreRecord>) =
            table.records.iter().partition(|r| r.is_genuine);
        let auc = mann_whitney_auc(
            &genuine.iter().map(|r| r.e_hat).collect::<Vec<_>>(),
            &impostor.iter().map(|r| r.e_hat).collect::<Vec<_>>(),
        )
        .ok();
        rank1.push(Rank1Row {
            scope: "rare-subset".into(),
            n_latents: m,
            gallery_size: m,
            baseline: curves.baseline.rank1(),
            fused: curves.fused.rank1(),
            modified: curves.modified.rank1(),
            e_t: params.e_t,
        });
        rank1.push(Rank1Row {
            scope: "rare-subset-best-e_t".into(),
            n_latents: m,
            gallery_size: m,
            baseline: curves.baseline.rank1(),
            fused: curves.fused.rank1(),
            modified: modified_at_best.rank1(),
            e_t: sweep.best_e_t,
        });
        let holdout = if opts.holdout {
            let tuning: Vec<usize> = (0..m).step_by(2).collect();
            let held: Vec<usize> = (1..m).step_by(2).collect();
            let tuned = sweep_threshold_rows(&table, &tuning, params, &thresholds)?;
            let p = params.with_threshold(tuned.best_e_t);
            let evaluation = Rank1Row {
                scope: "rare-subset-held-out".into(),
                n_latents: held.len(),
                gallery_size: m,
                baseline: table.rank1(&held, |r| r.s_m),
                fused: table.rank1(&held, |r| r.s_prime),
                modified: table.rank1(&held, |r| r.rescored(&p)),
                e_t: tuned.best_e_t,
            };
            rank1.push(evaluation.clone());
            Some(HoldoutResult {
                tuning_latents: tuning.len(),
                sweep: tuned,
                evaluation,
            })
        } else {
            None
        };
        Some(SubsetReport {
            table,
            curves,
            modified_at_best,
            sweep,
            density,
            auc,
            holdout,
        })
    };
    rank1.push(Rank1Row {
        scope: "full".into(),
        n_latents: n,
        gallery_size: n,
        baseline: full.baseline.rank1(),
        fused: full.fused.rank1(),
        modified: full.modified.rank1(),
        e_t: params.e_t,
    });

    Ok(Report {
        alignment: cfg.clone(),
        fusion: *params,
        options: opts.clone(),
        n_subjects: n,
        n_rare: rare_rows.len(),
        rare,
        full,
        rank1,
    })
}

#[cfg(test)]
mod tests;
