//! Writing a [`Report`] to a directory of CSV files, a JSON summary and
//! optional SVG charts.

use std::fs;
use std::path::{Path, PathBuf};

use super::svg::{Chart, Series};
use super::{CmcCurve, Curves, Report, ScoreTable, SweepResult};
use crate::error::{Error, Result};

/// Files every report contains; the rare-subset files are added when the
/// subset is not empty.
pub const REPORT_FILES: &[&str] = &[
    "summary.json",
    "rank1_summary.csv",
    "cmc_baseline_full.csv",
    "cmc_fused_full.csv",
    "cmc_modified_full.csv",
];

fn rank1_csv(report: &Report) -> String {
    let mut out = String::from("scope,n_latents,gallery_size,alpha,beta,e_t,baseline,fused,modified\n");
    for r in &report.rank1 {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scope,
            r.n_latents,
            r.gallery_size,
            report.fusion.alpha,
            report.fusion.beta,
            r.e_t,
            r.baseline,
            r.fused,
            r.modified
        ));
    }
    out
}

fn scores_csv(table: &ScoreTable) -> String {
    let mut out =
        String::from("latent_id,tenprint_id,is_genuine,s_m,fitting_error,e_hat,s_prime,s_double_prime\n");
    for r in &table.records {
        let e = r.fitting_error.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.latent_id, r.tenprint_id, r.is_genuine, r.s_m, e, r.e_hat, r.s_prime, r.s_double_prime
        ));
    }
    out
}

fn cmc_chart(title: &str, curves: &[(&'static str, &CmcCurve)]) -> String {
    let gallery = curves.first().map_or(1, |c| c.1.gallery_size);
    Chart {
        title,
        x_label: "rank",
        y_label: "identification rate",
        x_range: (1.0, gallery.max(2) as f64),
        y_range: (0.0, 1.0),
        series: curves
            .iter()
            .map(|(name, c)| Series {
                name,
                points: c
                    .accuracies
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| ((k + 1) as f64, a))
                    .collect(),
            })
            .collect(),
    }
    .render()
}

impl SweepResult {
    pub fn to_svg(&self) -> String {
        Chart {
            title: "Rank-1 against e_t",
            x_label: "e_t",
            y_label: "Rank-1",
            x_range: (self.thresholds[0], self.thresholds[self.thresholds.len() - 1]),
            y_range: (0.0, 1.0),
            series: vec![Series {
                name: "S''",
                points: self
                    .thresholds
                    .iter()
                    .copied()
                    .zip(self.rank1.iter().copied())
                    .collect(),
            }],
        }
        .render()
    }
}

fn curve_set(c: &Curves) -> Vec<(&'static str, &CmcCurve)> {
    vec![("S_m", &c.baseline), ("S'", &c.fused), ("S''", &c.modified)]
}

/// Writes all report files into `dir`, creating it when needed, and returns
/// the paths written in a fixed order.
pub fn write_report(report: &Report, dir: impl AsRef<Path>, svg: bool) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    files.push(("summary.json".into(), json + "\n"));
    files.push(("rank1_summary.csv".into(), rank1_csv(report)));
    files.push(("cmc_baseline_full.csv".into(), report.full.baseline.to_csv()));
    files.push(("cmc_fused_full.csv".into(), report.full.fused.to_csv()));
    files.push(("cmc_modified_full.csv".into(), report.full.modified.to_csv()));
    if let Some(rare) = &report.rare {
        files.push(("cmc_baseline.csv".into(), rare.curves.baseline.to_csv()));
        files.push(("cmc_fused.csv".into(), rare.curves.fused.to_csv()));
        files.push(("cmc_modified.csv".into(), rare.curves.modified.to_csv()));
        files.push(("cmc_modified_best.csv".into(), rare.modified_at_best.to_csv()));
        files.push(("sweep.csv".into(), rare.sweep.to_csv()));
        files.push(("scores.csv".into(), scores_csv(&rare.table)));
        if let Some(d) = &rare.density {
            files.push(("error_density.csv".into(), d.to_csv()));
        }
        if let Some(h) = &rare.holdout {
            files.push(("sweep_tuning.csv".into(), h.sweep.to_csv()));
        }
    }
    if svg {
        files.push((
            "cmc_full.svg".into(),
            cmc_chart("CMC, all latents", &curve_set(&report.full)),
        ));
        if let Some(rare) = &report.rare {
            let mut set = curve_set(&rare.curves);
            set.push(("S'' best e_t", &rare.modified_at_best));
            files.push(("cmc.svg".into(), cmc_chart("CMC, rare-feature latents", &set)));
            files.push(("sweep.svg".into(), rare.sweep.to_svg()));
            if let Some(d) = &rare.density {
                let w = 1.0 / d.bins as f64;
                let step = |h: &[f64]| {
                    let mut pts = Vec::with_capacity(2 * h.len());
                    for (k, &v) in h.iter().enumerate() {
                        pts.push((k as f64 * w, v));
                        pts.push(((k + 1) as f64 * w, v));
                    }
                    pts
                };
                let top = d.genuine.iter().chain(&d.impostor).fold(0.0f64, |a, &b| a.max(b));
                let chart = Chart {
                    title: "Fitting-error similarity",
                    x_label: "E-hat",
                    y_label: "fraction of comparisons",
                    x_range: (0.0, 1.0),
                    y_range: (0.0, top.max(1e-9)),
                    series: vec![
                        Series {
                            name: "genuine",
                            points: step(&d.genuine),
                        },
                        Series {
                            name: "impostor",
                            points: step(&d.impostor),
                        },
                    ],
                };
                files.push(("error_density.svg".into(), chart.render()));
            }
        }
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
