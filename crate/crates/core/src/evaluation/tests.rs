use super::*;
use crate::dataio::{gen_synthetic, SynthParams};
use crate::fusion::threshold_modify;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rank by sorting: descending score, mate placed after every tied entry.
fn oracle_rank(row: &[f64], mate: usize) -> usize {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then((a == mate).cmp(&(b == mate))));
    order.iter().position(|&j| j == mate).unwrap() + 1
}

fn oracle_cmc(rows: &[Vec<f64>], mates: &[usize]) -> Vec<f64> {
    let g = rows[0].len();
    (1..=g)
        .map(|k| {
            let hits = rows
                .iter()
                .zip(mates)
                .filter(|(r, &m)| oracle_rank(r, m) <= k)
                .count();
            hits as f64 / rows.len() as f64
        })
        .collect()
}

fn small(n: usize, seed: u64) -> SynthParams {
    SynthParams {
        n_subjects: n,
        seed,
        ..Default::default()
    }
}

#[test]
fn mate_loses_ties() {
    assert_eq!(mate_rank(&[0.5, 0.5, 0.5], 1), 3);
    assert_eq!(mate_rank(&[0.9, 0.5, 0.1], 0), 1);
    assert_eq!(mate_rank(&[0.9, 0.5, 0.1], 2), 3);
}

#[test]
fn cmc_matches_sorting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = 20;
        // coarse values so ties are common
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect())
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let m = ScoreMatrix::from_rows(ids.clone(), ids.clone(), rows.clone()).unwrap();
        let c = cmc(&m, &identity_mates(&ids)).unwrap();
        let oracle = oracle_cmc(&rows, &(0..n).collect::<Vec<_>>());
        assert_eq!(c.accuracies, oracle);
        assert!(c.is_monotone());
        assert!(c.reaches_one());
        assert_eq!((c.n_latents, c.gallery_size), (n, n));
    }
}

#[test]
fn cmc_errors() {
    let ids = vec!["a".to_string(), "b".to_string()];
    let m = ScoreMatrix::from_rows(ids.clone(), ids.clone(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let mut mates = identity_mates(&ids);
    mates.insert("b".into(), "z".into());
    assert!(matches!(cmc(&m, &mates), Err(Error::InvalidInput(_))));
    mates.remove("b");
    assert!(matches!(cmc(&m, &mates), Err(Error::InvalidInput(_))));
    assert!(CmcCurve::from_ranks(&[], 3).is_err());
    assert!(CmcCurve::from_ranks(&[4], 3).is_err());
    let c = CmcCurve::from_ranks(&[1, 3, 1, 2], 3).unwrap();
    assert_eq!(c.accuracies, vec![0.5, 0.75, 1.0]);
    assert_eq!(c.rank(10), 1.0);
    assert_eq!(c.to_csv(), "rank,accuracy\n1,0.5\n2,0.75\n3,1\n");
}

fn rec(e_hat: f64, genuine: bool) -> ScoreRecord {
    ScoreRecord {
        latent_id: "l".into(),
        tenprint_id: "t".into(),
        s_m: 0.5,
        e_hat,
        fitting_error: None,
        s_prime: 0.5,
        s_double_prime: 0.5,
        is_genuine: genuine,
    }
}

#[test]
fn density_bins_and_classes() {
    assert_eq!(density_bin(1.0, 50), 49);
    assert_eq!(density_bin(0.0, 50), 0);
    assert_eq!(density_bin(0.25, 50), 12);
    assert_eq!(density_bin(0.999, 50), 49);
    let records = [rec(1.0, true), rec(0.99, true), rec(0.5, true), rec(0.25, false)];
    let d = error_density(&records, 50).unwrap();
    assert_eq!(d.genuine[49], 2.0 / 3.0);
    assert_eq!(d.genuine[25], 1.0 / 3.0);
    assert_eq!(d.impostor[12], 1.0);
    assert_eq!((d.genuine_mode(), d.impostor_mode()), (49, 12));
    assert!((d.genuine.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(d.to_csv().lines().count(), 51);
    assert!(matches!(
        error_density(&records[..3], 50),
        Err(Error::EmptyClass(_))
    ));
    assert!(matches!(
        error_density(&records[3..], 50),
        Err(Error::EmptyClass(_))
    ));
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count(
        g in prop::collection::vec(0u8..10, 1..30),
        i in prop::collection::vec(0u8..10, 1..30),
    ) {
        let g: Vec<f64> = g.into_iter().map(f64::from).collect();
        let i: Vec<f64> = i.into_iter().map(f64::from).collect();
        let mut wins = 0.0;
        for a in &g {
            for b in &i {
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        let expected = wins / (g.len() * i.len()) as f64;
        prop_assert!((mann_whitney_auc(&g, &i).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn cmc_is_monotone_and_ends_at_one(ranks in prop::collection::vec(1usize..=12, 1..40)) {
        let c = CmcCurve::from_ranks(&ranks, 12).unwrap();
        prop_assert!(c.is_monotone());
        prop_assert!(c.reaches_one());
    }
}

#[test]
fn threshold_grid_values() {
    let g = threshold_grid(0.8, 1.0, 0.005).unwrap();
    assert_eq!(g.len(), 41);
    assert_eq!(g[0], 0.8);
    assert_eq!(g[24], 0.92);
    assert_eq!(g[40], 1.0);
    assert!(threshold_grid(1.0, 0.8, 0.005).is_err());
    assert!(threshold_grid(0.8, 1.0, 0.0).is_err());
}

fn evaluate(ds: &Dataset, opts: &EvaluationOptions) -> Report {
    evaluate_full(
        ds,
        &MatcherChoice::Internal(MatcherConfig::default()),
        &AlignmentConfig::default(),
        &FusionParams::default(),
        opts,
    )
    .unwrap()
}

#[test]
fn report_matches_recomputation() {
    let ds = gen_synthetic(&small(24, 5)).unwrap();
    let report = evaluate(
        &ds,
        &EvaluationOptions {
            holdout: true,
            ..Default::default()
        },
    );
    let cfg = AlignmentConfig::default();
    let params = FusionParams::default();
    let s_m = normalize_scores(&internal_score_matrix(&ds, &MatcherConfig::default()));
    let subjects = ds.subjects();
    let n = subjects.len();
    let rare: Vec<usize> = (0..n).filter(|&i| subjects[i].has_rare).collect();
    assert_eq!(report.n_rare, rare.len());
    assert!(!rare.is_empty() && rare.len() < n);

    // full set recomputed comparison by comparison
    let mut base = vec![vec![0.0; n]; n];
    let mut fused = base.clone();
    let mut modified = base.clone();
    for i in 0..n {
        for j in 0..n {
            let s = s_m.get(i, j);
            base[i][j] = s;
            if subjects[i].has_rare {
                let e = crate::alignment::fitting_error(&subjects[i].latent, &subjects[j].tenprint, &cfg);
                let e_hat = crate::alignment::error_to_similarity(e, &cfg).unwrap();
                fused[i][j] = (s + e_hat) / 2.0;
                modified[i][j] = threshold_modify(fused[i][j], e_hat, &params);
            } else {
                fused[i][j] = s;
                modified[i][j] = s;
            }
        }
    }
    let mates: Vec<usize> = (0..n).collect();
    assert_eq!(report.full.baseline.accuracies, oracle_cmc(&base, &mates));
    assert_eq!(report.full.fused.accuracies, oracle_cmc(&fused, &mates));
    assert_eq!(report.full.modified.accuracies, oracle_cmc(&modified, &mates));

    // rare subset: same scores restricted to the subset
    let pick = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rare.iter()
            .map(|&i| rare.iter().map(|&j| m[i][j]).collect())
            .collect()
    };
    let sub_mates: Vec<usize> = (0..rare.len()).collect();
    let sub = report.rare.as_ref().unwrap();
    assert_eq!(
        sub.curves.baseline.accuracies,
        oracle_cmc(&pick(&base), &sub_mates)
    );
    assert_eq!(sub.curves.fused.accuracies, oracle_cmc(&pick(&fused), &sub_mates));
    assert_eq!(
        sub.curves.modified.accuracies,
        oracle_cmc(&pick(&modified), &sub_mates)
    );

    // sweep: each threshold recomputed from S′ and Ê
    let table = &sub.table;
    for (&t, &r1) in sub.sweep.thresholds.iter().zip(&sub.sweep.rank1) {
        let p = params.with_threshold(t);
        let rows: Vec<Vec<f64>> = (0..table.n_latents())
            .map(|i| {
                table
                    .row(i)
                    .iter()
                    .map(|r| threshold_modify(r.s_prime, r.e_hat, &p))
                    .collect()
            })
            .collect();
        assert_eq!(r1, oracle_cmc(&rows, &sub_mates)[0], "e_t {t}");
    }
    let best = sub.sweep.rank1.iter().cloned().fold(f64::MIN, f64::max);
    let first = sub.sweep.rank1.iter().position(|&r| r == best).unwrap();
    assert_eq!(sub.sweep.best_e_t, sub.sweep.thresholds[first]);
    assert_eq!(sub.modified_at_best.rank1(), best);
    assert_eq!(sub.sweep.thresholds.len(), 41);
    let h = sub.holdout.as_ref().unwrap();
    assert_eq!(h.tuning_latents + h.evaluation.n_latents, rare.len());
    assert_eq!(report.rank1.last().unwrap().scope, "full");
    for c in report.curves() {
        assert!(c.is_monotone() && c.reaches_one());
    }
}

#[test]
fn no_rare_latents_leave_scores_unchanged() {
    let mut p = small(12, 2);
    p.type_distribution = [0.0; 15];
    p.type_distribution[0] = 0.6;
    p.type_distribution[1] = 0.4;
    let ds = gen_synthetic(&p).unwrap();
    let r = evaluate(&ds, &EvaluationOptions::default());
    assert_eq!(r.n_rare, 0);
    assert!(r.rare.is_none());
    assert_eq!(r.full.baseline, r.full.fused);
    assert_eq!(r.full.baseline, r.full.modified);
    assert_eq!(r.rank1.len(), 1);
}

#[test]
fn all_rare_subset_is_full_set() {
    let mut p = small(10, 4);
    p.type_distribution = [0.0; 15];
    p.type_distribution[0] = 0.5;
    p.type_distribution[7] = 0.5;
    p.rare_dropout_prob = 0.0;
    let ds = gen_synthetic(&p).unwrap();
    assert!(ds.subjects().iter().all(|s| s.has_rare));
    let r = evaluate(&ds, &EvaluationOptions::default());
    let sub = r.rare.as_ref().unwrap();
    assert_eq!(sub.curves, r.full);
}

#[test]
fn external_scores_must_follow_dataset_order() {
    let ds = gen_synthetic(&small(4, 1)).unwrap();
    let mut ids = ds.ids();
    let rows = vec![vec![1.0; 4]; 4];
    let ok = ScoreMatrix::from_rows(ids.clone(), ids.clone(), rows.clone()).unwrap();
    let r = evaluate_full(
        &ds,
        &MatcherChoice::External(ok),
        &AlignmentConfig::default(),
        &FusionParams::default(),
        &EvaluationOptions::default(),
    );
    assert!(r.is_ok());
    ids.swap(0, 1);
    let bad = ScoreMatrix::from_rows(ids.clone(), ids, rows).unwrap();
    let r = evaluate_full(
        &ds,
        &MatcherChoice::External(bad),
        &AlignmentConfig::default(),
        &FusionParams::default(),
        &EvaluationOptions::default(),
    );
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}

#[test]
fn report_files_are_deterministic() {
    let ds = gen_synthetic(&small(12, 9)).unwrap();
    let opts = EvaluationOptions::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = write_report(&evaluate(&ds, &opts), a.path(), true).unwrap();
    let fb = write_report(&evaluate(&ds, &opts), b.path(), true).unwrap();
    assert_eq!(fa.len(), fb.len());
    for name in REPORT_FILES {
        assert!(a.path().join(name).exists(), "{name}");
    }
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
    let sweep = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("e_t,rank1\n0.8,"));
    assert!(std::fs::read_to_string(a.path().join("cmc.svg"))
        .unwrap()
        .starts_with("<svg"));
}
