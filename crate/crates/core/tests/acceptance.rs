//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarefit::alignment::{align, fit_affine, AlignmentConfig, PreparedTenprint, FALLBACK_SIMILARITY};
use rarefit::dataio::{
    gen_synthetic, load_dataset, save_dataset, type_frequencies, Dataset, Scope, Subject, SynthParams,
};
use rarefit::evaluation::{
    cmc, evaluate_full, sweep_threshold, threshold_grid, write_report, CmcCurve, EvaluationOptions,
    MatcherChoice, Report,
};
use rarefit::fusion::{fuse_mean, score_comparison, threshold_modify, FusionParams};
use rarefit::matcher::{MatcherConfig, ScoreMatrix};
use rarefit::minutia::{Minutia, MinutiaSet, MinutiaType, SetKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rotate(p: [f64; 2], c: [f64; 2], deg: f64) -> [f64; 2] {
    let (s, co) = deg.to_radians().sin_cos();
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    [c[0] + co * dx - s * dy, c[1] + s * dx + co * dy]
}

/// Uniform scatter with a minimum spacing; the first point is a fragment,
/// the rest are typical.
fn scatter(rng: &mut ChaCha8Rng, n: usize) -> Vec<Minutia> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    while pts.len() < n {
        let p = [rng.random_range(20.0..380.0), rng.random_range(20.0..380.0)];
        if pts.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= 10.0) {
            pts.push(p);
        }
    }
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let t = match i {
                0 => MinutiaType::Fragment,
                _ if rng.random_bool(0.5) => MinutiaType::RidgeEnding,
                _ => MinutiaType::Bifurcation,
            };
            Minutia::new(p[0], p[1], rng.random_range(0.0..360.0), t)
        })
        .collect()
}

fn affine_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = AlignmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_e: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    let mut failures = 0;
    for i in 0..100 {
        let tp = scatter(&mut rng, 80);
        let k = rng.random_range(8..=12);
        let anchor = tp[0].xy();
        let mut idx: Vec<usize> = (0..tp.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = (tp[a].x - anchor[0]).hypot(tp[a].y - anchor[1]);
            let db = (tp[b].x - anchor[0]).hypot(tp[b].y - anchor[1]);
            da.total_cmp(&db)
        });
        let deg = rng.random_range(-45..=45) as f64;
        let shift = [rng.random_range(100.0..300.0), rng.random_range(100.0..300.0)];
        let latent: Vec<Minutia> = idx[..k]
            .iter()
            .map(|&j| {
                let [x, y] = rotate(tp[j].xy(), [200.0, 200.0], deg);
                Minutia::new(
                    x + shift[0],
                    y + shift[1],
                    (tp[j].theta + deg).rem_euclid(360.0),
                    tp[j].mtype,
                )
            })
            .collect();
        let l = MinutiaSet::new(format!("l{i}"), SetKind::Latent, latent).unwrap();
        let m = MinutiaSet::new(format!("m{i}"), SetKind::Tenprint, tp).unwrap();
        let out = align(&l, &PreparedTenprint::new(&m), &cfg);
        let Some(fit) = out.best().and_then(|b| b.fit.as_ref().ok()) else {
            failures += 1;
            continue;
        };
        // the fit maps latent onto tenprint, undoing the generating rotation
        let (s, c) = (-deg).to_radians().sin_cos();
        let a = fit.linear_part();
        let da = (a[0][0] - c)
            .abs()
            .max((a[0][1] + s).abs())
            .max((a[1][0] - s).abs())
            .max((a[1][1] - c).abs());
        worst_e = worst_e.max(fit.error);
        worst_a = worst_a.max(da);
        if fit.error >= 1e-6 || da > 1e-6 {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 10.0,
        format!(
            "100 instances, {failures} failures, max E {worst_e:.2e}, max |A - R| {worst_a:.2e}, {secs:.2} s"
        ),
    )
}

fn least_squares_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=20);
        let a: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
        let sigma = rng.random_range(0.0..10.0);
        let tau = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
        let latent: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)])
            .collect();
        let tenprint: Vec<[f64; 2]> = latent
            .iter()
            .map(|p| {
                [
                    a[0] * p[0] + a[1] * p[1] + a[2] + rng.random_range(-sigma..=sigma),
                    a[3] * p[0] + a[4] * p[1] + a[5] + rng.random_range(-sigma..=sigma),
                ]
            })
            .collect();
        let fit = fit_affine(&latent, &tenprint, tau, 3).unwrap();
        // direct pseudo-inverse solution of [x y 1] B = m - tau
        let x = DMatrix::from_fn(n, 3, |i, j| if j < 2 { latent[i][j] } else { 1.0 });
        let y = DMatrix::from_fn(n, 2, |i, j| tenprint[i][j] - tau[j]);
        let b = x.clone().pseudo_inverse(1e-12).unwrap() * &y;
        let r = &y - &x * b;
        let oracle = r.norm_squared() / n as f64;
        worst = worst.max((fit.error - oracle).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("1000 instances, max |E - E_oracle| = {worst:.2e}"),
    )
}

fn evaluate(ds: &Dataset) -> Report {
    evaluate_full(
        ds,
        &MatcherChoice::Internal(MatcherConfig::default()),
        &AlignmentConfig::default(),
        &FusionParams::default(),
        &EvaluationOptions::default(),
    )
    .unwrap()
}

fn separation(report: &Report) -> Outcome {
    let rare = report.rare.as_ref().unwrap();
    let auc = rare.auc.unwrap();
    let d = rare.density.as_ref().unwrap();
    let (g, i) = (d.genuine_mode(), d.impostor_mode());
    outcome(
        auc > 0.9 && g > i,
        format!(
            "{} rare latents, AUC {auc:.4}, genuine mode bin {g}, impostor mode bin {i}",
            report.n_rare
        ),
    )
}

fn type_table_fixture() -> Outcome {
    let counts: [(MinutiaType, usize, &str); 9] = [
        (MinutiaType::RidgeEnding, 1902, "0.5634"),
        (MinutiaType::Bifurcation, 1222, "0.3620"),
        (MinutiaType::Deviation, 5, "0.0015"),
        (MinutiaType::Bridge, 8, "0.0024"),
        (MinutiaType::Fragment, 150, "0.0444"),
        (MinutiaType::Interruption, 7, "0.0021"),
        (MinutiaType::Enclosure, 69, "0.0204"),
        (MinutiaType::Point, 12, "0.0036"),
        (MinutiaType::Transversal, 1, "0.0003"),
    ];
    let all: Vec<MinutiaType> = counts
        .iter()
        .flat_map(|&(t, n, _)| std::iter::repeat_n(t, n))
        .collect();
    // dealt round-robin over 268 latents, as in the source database
    let subjects: Vec<Subject> = (0..268)
        .map(|s| {
            let ms: Vec<Minutia> = all
                .iter()
                .skip(s)
                .step_by(268)
                .enumerate()
                .map(|(k, &t)| Minutia::new(10.0 * k as f64, 10.0, 0.0, t))
                .collect();
            let id = format!("g{s:03}");
            let l = MinutiaSet::new(format!("{id}/latent"), SetKind::Latent, ms.clone()).unwrap();
            let m = MinutiaSet::new(format!("{id}/tenprint"), SetKind::Tenprint, ms).unwrap();
            Subject::new(id, l, m)
        })
        .collect();
    let n_latents = subjects.len();
    let ds = Dataset::new(500, None, subjects).unwrap();
    let table = type_frequencies(&ds, Scope::Latents).unwrap();
    let wrong: Vec<String> = counts
        .iter()
        .filter(|(t, _, p)| table.rounded_p(*t) != *p)
        .map(|(t, _, p)| format!("{t}: {} vs {p}", table.rounded_p(*t)))
        .collect();
    outcome(
        wrong.is_empty() && table.total == 3376 && table.observed().count() == 9,
        format!(
            "{n_latents} latents, total {}, {} rows, mismatches {:?}",
            table.total,
            table.observed().count(),
            wrong
        ),
    )
}

fn exact_arithmetic() -> Outcome {
    let p = FusionParams::default();
    let fused = fuse_mean(0.5, 0.9).unwrap();
    let reward = threshold_modify(0.7, 0.95, &p);
    let boundary = threshold_modify(0.7, 0.92, &p);
    outcome(
        fused == 0.7 && reward == 1.4 && boundary == 0.7,
        format!("(0.5, 0.9) -> {fused}; (0.7, 0.95) -> {reward}; Ê = e_t -> {boundary}"),
    )
}

/// Sorting oracle: descending score, the mate after every tied entry.
fn oracle_cmc(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let ranks: Vec<usize> = rows
        .iter()
        .enumerate()
        .map(|(mate, row)| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then((a == mate).cmp(&(b == mate))));
            order.iter().position(|&j| j == mate).unwrap() + 1
        })
        .collect();
    (1..=rows[0].len())
        .map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64)
        .collect()
}

fn cmc_correctness(curves: &[&CmcCurve]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut mismatches = 0;
    for _ in 0..200 {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..20).map(|_| rng.random_range(0..8) as f64 / 7.0).collect())
            .collect();
        let ids: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        let mates: HashMap<String, String> = ids.iter().map(|i| (i.clone(), i.clone())).collect();
        let m = ScoreMatrix::from_rows(ids.clone(), ids, rows.clone()).unwrap();
        let c = cmc(&m, &mates).unwrap();
        if c.accuracies != oracle_cmc(&rows) || !c.is_monotone() || !c.reaches_one() {
            mismatches += 1;
        }
    }
    let bad_runs = curves
        .iter()
        .filter(|c| !(c.is_monotone() && c.reaches_one()))
        .count();
    outcome(
        mismatches == 0 && bad_runs == 0,
        format!(
            "200 random 20x20 matrices, {mismatches} oracle mismatches; {} evaluation curves, {bad_runs} violating monotonicity or terminal value",
            curves.len()
        ),
    )
}

fn fallback_path(reports: &[&Report]) -> Outcome {
    let cfg = AlignmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut grid = threshold_grid(0.8, 1.0, 0.005).unwrap();
    grid.extend((0..20).map(|_| rng.random_range(0.8..=1.0)));
    let mut checked = 0;
    let mut violations = 0;
    let mut check = |s_prime: f64, e_hat: f64| {
        for &t in &grid {
            for p in [
                FusionParams::default().with_threshold(t),
                FusionParams {
                    alpha: 3.0,
                    beta: 0.5,
                    e_t: t,
                },
            ] {
                checked += 1;
                if e_hat != FALLBACK_SIMILARITY || threshold_modify(s_prime, e_hat, &p) != s_prime * p.beta {
                    violations += 1;
                }
            }
        }
    };
    // constructed pairs: latents with only typical types, or rare types absent from the tenprint
    for i in 0..50 {
        let mut l = scatter(&mut rng, 12);
        let mut m = scatter(&mut rng, 60);
        if i % 2 == 0 {
            l[0].mtype = MinutiaType::RidgeEnding;
        } else {
            l[0].mtype = MinutiaType::Enclosure;
        }
        m[0].mtype = MinutiaType::Point;
        let l = MinutiaSet::new("l", SetKind::Latent, l).unwrap();
        let m = MinutiaSet::new("m", SetKind::Tenprint, m).unwrap();
        let s_m = rng.random_range(0.0..=1.0);
        let r = score_comparison(&l, &m, s_m, &cfg, &FusionParams::default(), false).unwrap();
        check(r.s_prime, r.e_hat);
    }
    // every unfitted comparison of the evaluation runs
    for report in reports {
        for r in report.rare.iter().flat_map(|s| &s.table.records) {
            if r.fitting_error.is_none() {
                check(r.s_prime, r.e_hat);
            }
        }
    }
    outcome(
        violations == 0,
        format!("{checked} (comparison, e_t >= 0.8) checks, {violations} rewarded or off-fallback"),
    )
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> (Outcome, Vec<Report>) {
    let tmp = tempfile::tempdir().unwrap();
    let params = SynthParams {
        n_subjects: 40,
        seed: 1010,
        ..Default::default()
    };
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let ds = gen_synthetic(&params).unwrap();
        let path = tmp.path().join(format!("{run}.json"));
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, ds);
        let report = evaluate(&loaded);
        write_report(&report, tmp.path().join(run), true).unwrap();
        reports.push(report);
    }
    let same_data = std::fs::read(tmp.path().join("a.json")).unwrap()
        == std::fs::read(tmp.path().join("b.json")).unwrap();
    let a = dir_files(&tmp.path().join("a"));
    let b = dir_files(&tmp.path().join("b"));
    let csvs = a.iter().filter(|f| f.0.ends_with(".csv")).count();
    (
        outcome(
            same_data && a == b && csvs >= 9,
            format!(
                "dataset files identical: {same_data}; {} report files ({csvs} CSV) byte-identical: {}",
                a.len(),
                a == b
            ),
        ),
        reports,
    )
}

fn main() {
    let mut lines: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "[{}] {n:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        lines.push((n, name, o));
    };

    record(1, "affine recovery", affine_recovery());
    record(2, "least-squares oracle", least_squares_oracle());

    let base = evaluate(&gen_synthetic(&SynthParams::default()).unwrap());
    record(3, "fitting-error separation", separation(&base));

    let mut seed_reports = Vec::new();
    for seed in 1..=20u64 {
        let ds = gen_synthetic(&SynthParams {
            seed,
            ..Default::default()
        })
        .unwrap();
        seed_reports.push(evaluate(&ds));
    }
    let rank1 = |r: &Report| {
        let s = r.rare.as_ref().unwrap();
        (
            s.curves.baseline.rank1(),
            s.curves.fused.rank1(),
            s.modified_at_best.rank1(),
        )
    };
    let fused_wins = seed_reports.iter().filter(|r| rank1(r).1 > rank1(r).0).count();
    let summary: Vec<String> = seed_reports
        .iter()
        .map(|r| {
            let (b, f, _) = rank1(r);
            format!("{:.3}>{:.3}", f, b)
        })
        .collect();
    record(
        4,
        "fusion beats baseline",
        outcome(
            fused_wins >= 18,
            format!(
                "Rank-1(S') > Rank-1(S_m) on {fused_wins}/20 seeds [{}]",
                summary.join(" ")
            ),
        ),
    );

    let modified_ok = seed_reports.iter().filter(|r| rank1(r).2 >= rank1(r).1).count();
    let mut flat = true;
    for r in &seed_reports {
        let table = &r.rare.as_ref().unwrap().table;
        for k in [0.5, 1.0, 2.0] {
            let s = sweep_threshold(
                table,
                &FusionParams {
                    alpha: k,
                    beta: k,
                    e_t: 0.9,
                },
                0.8,
                1.0,
                0.005,
            )
            .unwrap();
            flat &= s.rank1.iter().all(|&v| v == s.rank1[0]);
        }
    }
    let best: Vec<String> = seed_reports
        .iter()
        .map(|r| format!("{}", r.rare.as_ref().unwrap().sweep.best_e_t))
        .collect();
    record(
        5,
        "threshold modification",
        outcome(
            modified_ok >= 18 && flat,
            format!(
                "Rank-1(S'' at best e_t) >= Rank-1(S') on {modified_ok}/20 seeds; alpha = beta sweeps flat: {flat}; best e_t [{}]",
                best.join(" ")
            ),
        ),
    );

    record(6, "exact arithmetic", exact_arithmetic());
    record(7, "type frequency table", type_table_fixture());

    let (det, det_reports) = determinism();
    let all_reports: Vec<&Report> = std::iter::once(&base)
        .chain(&seed_reports)
        .chain(&det_reports)
        .collect();
    let curves: Vec<&CmcCurve> = all_reports.iter().flat_map(|r| r.curves()).collect();
    record(8, "CMC correctness", cmc_correctness(&curves));
    record(9, "fallback never rewarded", fallback_path(&all_reports));
    record(10, "determinism and round trip", det);

    let failed: Vec<u32> = lines.iter().filter(|l| !l.2.pass).map(|l| l.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
