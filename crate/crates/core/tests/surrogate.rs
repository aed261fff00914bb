use std::sync::OnceLock;

use proptest::prelude::*;
use rand::Rng;
use rvefield::data::*;
use rvefield::micro::{build_ensemble, run_sequences, EnsembleConfig};
use rvefield::nn::{RnnModel, TrainConfig};
use rvefield::pathgen::{generate_path_set, PathSetConfig};
use rvefield::pca::{PcaOptions, Retention};
use rvefield::rng::seeded;
use rvefield::surrogate::*;
use rvefield::Error;

const D: usize = 30;

fn records() -> &'static [SequenceRecord] {
    static RECORDS: OnceLock<Vec<SequenceRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| {
        let cfg = PathSetConfig { n_random: 16, n_cyclic: 4, delta_r: 2e-2, delta_r_min: 2e-3, cyclic_step: 2e-2, seed: 3, ..Default::default() };
        let paths = generate_path_set(&cfg).unwrap();
        let e = build_ensemble(&EnsembleConfig { d_gamma: D, n_fiber: 6, seed: 4, ..Default::default() }).unwrap();
        paths
            .iter()
            .zip(run_sequences(&paths, &e))
            .map(|(p, r)| SequenceRecord::from_simulation(p, &r, e.d_gamma(), e.d_tau()))
            .collect()
    })
}

fn spec(kind: Kind, n_h: usize, p: usize, q: usize, trained: usize) -> SurrogateSpec {
    let width = match kind {
        Kind::I => D,
        _ => p / q,
    };
    SurrogateSpec { kind, family: Family::Gamma, nnw_in: vec![3, 8], n_h, nnw_out: vec![8, width], p, q, trained_groups: trained, seed: 17 }
}

fn prepared(s: &SurrogateSpec, subsample: f64) -> SurrogateBundle {
    let recs = records();
    let (inorm, fnorm) = fit_normalizations(recs, s.family).unwrap();
    let pca = (s.kind != Kind::I).then(|| {
        let opts = PcaOptions { subsample_fraction: subsample, retention: Retention::Fixed(s.p), seed: 1, ..Default::default() };
        fit_field_pca(recs, s.family, &fnorm, &opts).unwrap()
    });
    let mut b = build_surrogate(s, D).unwrap();
    b.prep = Some(Preprocessing::new(recs, s.family, s.kind, inorm, fnorm, pca.as_ref(), s.p).unwrap());
    b
}

fn train_set(b: &SurrogateBundle) -> TrainingSet {
    b.prep().unwrap().training_set(records(), &[10, 25]).unwrap()
}

fn tcfg(n: usize) -> TrainConfig {
    TrainConfig { n_batches: n, batch_size: 3, learning_rate: 5e-3, seed: 5, ..Default::default() }
}

fn bits(m: &RnnModel) -> Vec<u64> {
    m.tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn split_rule_examples() {
    let x: Vec<f64> = (1..=180).map(f64::from).collect();
    let blocks = split_outputs(&x, 18).unwrap();
    assert_eq!(blocks.len(), 18);
    assert_eq!(blocks[0], (1..=10).map(f64::from).collect::<Vec<_>>());
    assert_eq!(blocks[17], (171..=180).map(f64::from).collect::<Vec<_>>());
    assert_eq!(split_outputs(&x, 1).unwrap(), vec![x.clone()]);
    assert!(matches!(split_outputs(&x, 7), Err(Error::Indivisible { p: 180, q: 7 })));
}

#[test]
fn published_architectures_are_constructible() {
    let base = SurrogateSpec { kind: Kind::III, family: Family::Gamma, nnw_in: vec![3, 70], n_h: 400, nnw_out: vec![100, 10], p: 180, q: 18, trained_groups: 10, seed: 0 };
    let b = build_surrogate(&base, 1607).unwrap();
    assert_eq!((b.rnns.len(), b.group_width()), (18, 10));
    assert_eq!(b.group_range(17), 170..180);
    assert!(b.is_trained(9) && !b.is_trained(10));

    let tau = SurrogateSpec { family: Family::Tau, n_h: 600, nnw_out: vec![200, 20], q: 9, trained_groups: 9, ..base.clone() };
    let b = build_surrogate(&tau, 2237).unwrap();
    assert_eq!(b.group_range(1), 20..40);

    let direct = SurrogateSpec { kind: Kind::I, n_h: 100, nnw_out: vec![800, 1607], q: 1, trained_groups: 1, ..base.clone() };
    assert_eq!(build_surrogate(&direct, 1607).unwrap().rnns[0].nnw_out.n_out(), 1607);

    assert!(matches!(build_surrogate(&SurrogateSpec { q: 7, ..base.clone() }, 1607), Err(Error::Indivisible { .. })));
    assert!(build_surrogate(&SurrogateSpec { nnw_out: vec![100, 9], ..base }, 1607).is_err());
}

#[test]
fn single_group_iii_equals_ii_bit_for_bit() {
    let mut two = prepared(&spec(Kind::II, 6, 8, 1, 1), 1.0);
    let mut three = prepared(&spec(Kind::III, 6, 8, 1, 1), 1.0);
    let set = train_set(&two);
    let h2 = train(&mut two, &set, &tcfg(25)).unwrap();
    let h3 = train(&mut three, &set, &tcfg(25)).unwrap();
    assert_eq!(bits(&two.rnns[0]), bits(&three.rnns[0]));
    assert_eq!(h2, h3);
    let a = evaluate(&two, records(), &[]).unwrap();
    let b = evaluate(&three, records(), &[]).unwrap();
    assert_eq!(a.mse_full_dim.to_bits(), b.mse_full_dim.to_bits());
}

#[test]
fn untrained_groups_keep_their_weights() {
    let mut b = prepared(&spec(Kind::III, 6, 8, 4, 2), 1.0);
    let before: Vec<Vec<u64>> = b.rnns.iter().map(bits).collect();
    let set = train_set(&b);
    let h = train(&mut b, &set, &tcfg(15)).unwrap();
    for q in 0..4 {
        assert_eq!(bits(&b.rnns[q]) == before[q], q >= 2, "group {q}");
    }
    assert!(h.batches.iter().all(|l| l.losses[2].is_none() && l.losses[0].is_some()));
    let h2 = train(&mut prepared(&spec(Kind::III, 6, 8, 4, 2), 1.0), &set, &tcfg(15)).unwrap();
    assert_eq!(h, h2, "fixed seed must reproduce the loss history");
}

#[test]
fn evaluation_never_beats_the_pca_floor() {
    for s in [spec(Kind::II, 6, 8, 1, 1), spec(Kind::III, 6, 8, 2, 2)] {
        let mut b = prepared(&s, 1.0);
        let set = train_set(&b);
        train(&mut b, &set, &tcfg(20)).unwrap();
        let floor = pca_floor(&b, records()).unwrap();
        let rep = evaluate(&b, records(), &[]).unwrap();
        assert!(rep.mse_full_dim >= floor - 1e-9, "{} < {floor}", rep.mse_full_dim);
    }
}

#[test]
fn evaluation_decomposes_into_coefficient_error_plus_residual() {
    // For an orthonormal basis, ‖x − x̂‖² = ‖ξ − ξ̂‖² + ‖x − VVᵀ(x − μ) − μ‖².
    let mut b = prepared(&spec(Kind::II, 5, 6, 1, 1), 1.0);
    let set = train_set(&b);
    train(&mut b, &set, &tcfg(10)).unwrap();
    let prep = b.prep().unwrap().clone();
    let pca = prep.pca.as_ref().unwrap();
    let rep = evaluate(&b, records(), &[]).unwrap();
    let (mut sq, mut steps) = (0.0, 0);
    for (i, r) in records().iter().enumerate() {
        let pred = predict_fields(&b, &r.inputs, r.n_in).unwrap();
        let truth = prep.field_norm.normalize(&r.gamma);
        let mut seq_sq = 0.0;
        for t in 0..r.length {
            let x = &truth[t * D..(t + 1) * D];
            let xi_true = pca.project(x).unwrap();
            let xi_pred = pca.project(&pred.normalized[t * D..(t + 1) * D]).unwrap();
            seq_sq += xi_true.iter().zip(&xi_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + pca.residual_sq(x).unwrap();
        }
        let seq_mse = seq_sq / (r.length * D) as f64;
        assert!((rep.per_sequence[i].mse - seq_mse).abs() <= 1e-10 * seq_mse.max(1e-12));
        sq += seq_sq;
        steps += r.length;
    }
    let oracle = sq / (steps * D) as f64;
    assert!((rep.mse_full_dim - oracle).abs() <= 1e-10 * oracle);
    let weighted: f64 = rep.per_sequence.iter().map(|s| s.mse * s.length as f64).sum::<f64>() / steps as f64;
    assert!((rep.mse_full_dim - weighted).abs() <= 1e-14 * weighted);
}

#[test]
fn untrained_bundle_matches_variance_baseline() {
    let b = prepared(&spec(Kind::III, 6, 8, 4, 0), 0.2);
    let rep = evaluate(&b, records(), &[]).unwrap();
    // Constant-predictor oracle: mean per-component variance of the normalized fields.
    let fnorm = &b.prep().unwrap().field_norm;
    let rows: Vec<Vec<f64>> = records().iter().flat_map(|r| fnorm.normalize(&r.gamma).chunks_exact(D).map(<[f64]>::to_vec).collect::<Vec<_>>()).collect();
    let n = rows.len() as f64;
    let var: f64 = (0..D)
        .map(|k| {
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / D as f64;
    assert!((rep.mse_full_dim - var).abs() <= 0.1 * var, "{} vs baseline {var}", rep.mse_full_dim);
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    for s in [spec(Kind::I, 5, 0, 1, 1), spec(Kind::III, 5, 8, 2, 1)] {
        let mut b = prepared(&s, 1.0);
        let set = train_set(&b);
        train(&mut b, &set, &tcfg(5)).unwrap();
        let path = dir.path().join(format!("{:?}", s.kind));
        b.save(&path).unwrap();
        let back = SurrogateBundle::load(&path).unwrap();
        assert_eq!(back, b);
        let r = &records()[3];
        let p1 = predict_fields(&b, &r.inputs, 3).unwrap();
        let p2 = predict_fields(&back, &r.inputs, 3).unwrap();
        assert!(p1.fields.iter().zip(&p2.fields).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn predictions_report_raw_and_clamped_gamma() {
    let mut b = prepared(&spec(Kind::I, 5, 0, 1, 1), 1.0);
    let set = train_set(&b);
    train(&mut b, &set, &tcfg(5)).unwrap();
    let pred = predict_fields(&b, &[0.0; 3 * 12], 3).unwrap();
    assert_eq!((pred.length, pred.d), (12, D));
    let clamped = pred.gamma_clamped.unwrap();
    assert!(clamped.iter().all(|&v| v >= 0.0));
    assert!(pred.fields.iter().zip(&clamped).all(|(raw, c)| *c == raw.max(0.0)));
    assert!(matches!(predict_fields(&b, &[0.0; 8], 4), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(predict_fields(&build_surrogate(&b.spec, D).unwrap(), &[0.0; 3], 3), Err(Error::NotPrepared)));
}

#[test]
fn evaluation_keeps_requested_snapshots() {
    let b = prepared(&spec(Kind::II, 4, 6, 1, 1), 1.0);
    let rep = evaluate(&b, records(), &[(2, 0), (2, 3), (5, 100_000)]).unwrap();
    assert_eq!(rep.snapshots.len(), 2);
    assert_eq!(rep.snapshots[1].reference, records()[2].field_row(Family::Gamma, 3));
    let s = &rep.per_sequence[2];
    assert_eq!(s.max_true.len(), s.length);
    assert_eq!(s.max_true[3], records()[2].field_row(Family::Gamma, 3).iter().copied().fold(f64::MIN, f64::max));
}

#[test]
fn nan_targets_abort_and_restore() {
    let mut b = prepared(&spec(Kind::II, 4, 6, 1, 1), 1.0);
    let mut set = train_set(&b);
    set.seqs.iter_mut().for_each(|s| s.outputs[0] = f64::NAN);
    let before = b.rnns.clone();
    assert!(matches!(train(&mut b, &set, &tcfg(3)), Err(Error::Diverged { batch: 0, .. })));
    assert_eq!(b.rnns.iter().map(bits).collect::<Vec<_>>(), before.iter().map(bits).collect::<Vec<_>>());
}

/// Records whose "field" is a fixed linear map of the current strain.
fn linear_records() -> Vec<SequenceRecord> {
    let mut rng = seeded(90);
    let map: Vec<[f64; 3]> = (0..4).map(|_| [0.0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
    let cfg = PathSetConfig { n_random: 24, n_cyclic: 0, delta_r: 2e-2, delta_r_min: 2e-3, seed: 8, ..Default::default() };
    generate_path_set(&cfg)
        .unwrap()
        .iter()
        .map(|p| {
            let inputs: Vec<f64> = p.strain_features().into_iter().flatten().collect();
            let field: Vec<f64> = inputs.chunks_exact(3).flat_map(|x| map.iter().map(move |w| w[0] * x[0] + w[1] * x[1] + w[2] * x[2])).collect();
            SequenceRecord::new(3, 4, 4, 0, inputs, field.clone(), field).unwrap()
        })
        .collect()
}

#[test]
fn linear_task_is_learned() {
    let recs = linear_records();
    let s = SurrogateSpec { kind: Kind::I, family: Family::Gamma, nnw_in: vec![3, 16], n_h: 16, nnw_out: vec![16, 4], p: 0, q: 1, trained_groups: 1, seed: 2 };
    let (inorm, fnorm) = fit_normalizations(&recs, Family::Gamma).unwrap();
    let mut b = build_surrogate(&s, 4).unwrap();
    b.prep = Some(Preprocessing::new(&recs, Family::Gamma, Kind::I, inorm, fnorm, None, 0).unwrap());
    let set = b.prep().unwrap().training_set(&recs, &[10]).unwrap();
    let cfg = TrainConfig { n_batches: 200, batch_size: 8, learning_rate: 1e-2, n_epoch: 5, seed: 1, ..Default::default() };
    let h = train(&mut b, &set, &cfg).unwrap();
    let rep = evaluate(&b, &recs, &[]).unwrap();
    assert!(h.tail_mean_full_dim(10) < 1e-4 || rep.mse_full_dim < 1e-4, "train {} eval {}", h.tail_mean_full_dim(10), rep.mse_full_dim);
}

#[test]
fn pearson_oracle() {
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    // hand-computed: x = (1,2,3,4), y = (1,3,2,4) → r = 0.8
    assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-15);
    assert_eq!(pearson(&[1.0, 1.0], &[0.0, 2.0]), 0.0);
}

#[test]
fn hidden_size_trial_reports_every_size() {
    let b = prepared(&spec(Kind::II, 4, 8, 1, 1), 1.0);
    let cfg = TrialConfig {
        target_p: 8,
        start_n_h: 2,
        increment: 3,
        max_n_h: 8,
        nnw_in: vec![3, 8],
        nnw_out_hidden: vec![4],
        group_lengths: vec![10, 25],
        train: TrainConfig { n_batches: 10, batch_size: 3, ..Default::default() },
        ..Default::default()
    };
    let rep = hidden_size_trial(records(), b.prep().unwrap(), &cfg).unwrap();
    assert_eq!(rep.threshold, TREND_THRESHOLD);
    let sizes: Vec<usize> = rep.steps.iter().map(|s| s.n_h).collect();
    match rep.recommended_n_h {
        Some(n) => assert_eq!(*sizes.last().unwrap(), n),
        None => assert_eq!(sizes, vec![2, 5, 8]),
    }
    assert!(rep.steps.iter().all(|s| s.passed == (s.score >= TREND_THRESHOLD)));
    assert!(hidden_size_trial(records(), b.prep().unwrap(), &TrialConfig { target_p: 9, ..cfg }).is_err());
}

proptest! {
    #[test]
    fn split_then_concatenate_is_identity(q in 1usize..12, k in 0usize..9, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let x: Vec<f64> = (0..q * k).map(|_| rng.gen()).collect();
        let blocks = split_outputs(&x, q).unwrap();
        prop_assert_eq!(blocks.len(), q);
        prop_assert!(blocks.iter().all(|b| b.len() == k));
        prop_assert_eq!(blocks.concat(), x);
    }
}
