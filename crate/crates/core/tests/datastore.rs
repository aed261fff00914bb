use std::io::Cursor;

use proptest::prelude::*;
use rand::Rng;
use rvefield::data::*;
use rvefield::micro::{build_ensemble, run_sequence, EnsembleConfig};
use rvefield::pathgen::*;
use rvefield::rng::seeded;

fn synthetic_record(len: usize, d_gamma: usize, d_tau: usize, seed: u64) -> SequenceRecord {
    let mut rng = seeded(seed);
    let inputs = (0..len * 3).map(|i| if i < 3 { 0.0 } else { rng.gen_range(-0.1..0.1) }).collect();
    let gamma = (0..len * d_gamma).map(|_| rng.gen_range(0.0..1.0)).collect();
    let tau = (0..len * d_tau).map(|_| rng.gen_range(0.0..200.0)).collect();
    SequenceRecord::new(3, d_gamma, d_tau, 0, inputs, gamma, tau).unwrap()
}

#[test]
fn normalization_examples() {
    let spec = NormalizationSpec::fit([&[0.0][..], &[2.0][..], &[1.5][..]], 1).unwrap();
    assert_eq!(spec.normalize(&[2.0, 0.0, 1.0, 3.0]), vec![1.0, -1.0, 0.0, 2.0]);
    assert_eq!((spec.chi_mu[0], spec.chi_s[0]), (1.0, 1.0));

    let flat = NormalizationSpec::fit([&[4.0, 1.0][..], &[4.0, 3.0][..]], 2).unwrap();
    assert_eq!(flat.degenerate, vec![true, false]);
    assert_eq!(flat.chi_s[0], 1.0);
    assert_eq!(flat.normalize(&[4.5, 3.0]), vec![0.5, 1.0]);
    assert_eq!(flat.n_degenerate(), 1);
}

#[test]
fn normalized_training_data_lies_in_unit_box() {
    let recs: Vec<_> = (0..5).map(|s| synthetic_record(20, 4, 6, s)).collect();
    let spec = NormalizationSpec::fit(recs.iter().flat_map(|r| r.tau.chunks_exact(6)), 6).unwrap();
    for r in &recs {
        assert!(spec.normalize(&r.tau).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    for k in 0..6 {
        assert_eq!(spec.chi_mu[k], 0.5 * (spec.chi_min[k] + spec.chi_max[k]));
        assert_eq!(spec.chi_s[k], 0.5 * (spec.chi_max[k] - spec.chi_min[k]));
    }
}

#[test]
fn file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut recs: Vec<_> = (0..4).map(|s| synthetic_record(7 + s as usize, 5, 8, s)).collect();
    recs[1].flags = FLAG_TRUNCATED | FLAG_CYCLIC;
    recs[2].gamma[3] = f64::MIN_POSITIVE / 3.0; // subnormal
    recs[3].tau[0] = -0.0;
    let file = dir.path().join("set.rveseq");
    io::write_records(&file, &recs).unwrap();
    let back = io::read_records(&file).unwrap();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.flags, b.flags);
        assert_eq!((a.n_in, a.d_gamma, a.d_tau, a.length), (b.n_in, b.d_gamma, b.d_tau, b.length));
        for (x, y) in a.inputs.iter().chain(&a.gamma).chain(&a.tau).zip(b.inputs.iter().chain(&b.gamma).chain(&b.tau)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    // Header layout: magic, version, three dims, length, flags, then little-endian doubles.
    let mut buf = Vec::new();
    io::write_record(&mut buf, &recs[1]).unwrap();
    assert_eq!(&buf[..7], b"RVESEQ1");
    assert_eq!(u32::from_le_bytes(buf[11..15].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(buf[15..19].try_into().unwrap()), 5);
    assert_eq!(u32::from_le_bytes(buf[19..23].try_into().unwrap()), 8);
    assert_eq!(u32::from_le_bytes(buf[23..27].try_into().unwrap()), 8);
    assert_eq!(buf[27], FLAG_TRUNCATED | FLAG_CYCLIC);
    assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), recs[1].inputs[0]);
    assert_eq!(buf.len(), 28 + 8 * 8 * (3 + 5 + 8));

    let mut cur = Cursor::new(b"NOTASEQ\0\0\0\0".to_vec());
    assert!(io::read_record(&mut cur).is_err());
    let mut cur = Cursor::new(buf[..40].to_vec());
    assert!(io::read_record(&mut cur).is_err(), "truncated file must not read cleanly");
}

#[test]
fn paths_round_trip_through_records() {
    let cfg = PathSetConfig { n_random: 3, n_cyclic: 2, ..Default::default() };
    for p in generate_path_set(&cfg).unwrap() {
        let rec = SequenceRecord::from_path(&p);
        let back = rec.to_path().unwrap();
        assert_eq!(back.steps, p.steps);
        assert_eq!(back.kind, p.kind);
    }
}

#[test]
fn pre_trim_examples() {
    let mut rec = synthetic_record(800, 3, 2, 1);
    rec.gamma.iter_mut().for_each(|g| *g *= 3.2);
    assert_eq!(pre_trim(&rec, 6.0, Family::Gamma).unwrap(), rec);
    rec.gamma[412 * 3 + 1] = 6.5;
    let cut = pre_trim(&rec, 6.0, Family::Gamma).unwrap();
    assert_eq!(cut.length, 412);
    assert_eq!(cut.gamma[..], rec.gamma[..412 * 3]);
    assert_eq!(cut.tau[..], rec.tau[..412 * 2]);
    let zeros = SequenceRecord::new(3, 2, 2, 0, vec![0.0; 30], vec![0.0; 20], vec![0.0; 20]).unwrap();
    assert_eq!(pre_trim(&zeros, 6.0, Family::Gamma).unwrap(), zeros);
    rec.gamma[0] = 7.0;
    assert_eq!(pre_trim(&rec, 6.0, Family::Gamma).unwrap().length, 0);
    assert!(pre_trim(&rec, 0.0, Family::Gamma).is_err());
}

#[test]
fn pad_trim_examples() {
    let idx = pad_trim_index(600, 800);
    assert_eq!(idx.len(), 800);
    assert_eq!(idx.iter().filter(|&&i| i == 0).count(), 101);
    assert_eq!(idx.iter().filter(|&&i| i == 599).count(), 101);
    assert_eq!(pad_trim_index(1000, 800), (0..800).collect::<Vec<_>>());
    assert_eq!(pad_trim_index(5, 5), vec![0, 1, 2, 3, 4]);
    assert_eq!(pad_trim_index(3, 6), vec![0, 0, 1, 2, 2, 2]);

    let rec = synthetic_record(4, 2, 3, 9);
    let padded = pad_or_trim(&rec, 9).unwrap();
    assert_eq!(padded.length, 9);
    assert_eq!(padded.field_row(Family::Tau, 0), rec.field_row(Family::Tau, 0));
    assert_eq!(padded.field_row(Family::Tau, 8), rec.field_row(Family::Tau, 3));
}

#[test]
fn sampling_is_uniform_within_group() {
    // chi-square over 10^5 draws from a group of 10; 1 % critical value for 9 dof
    const CRITICAL_9_DOF_1PCT: f64 = 21.666;
    let seqs: Vec<_> = (0..12)
        .map(|i| PairSequence::new(1, 1, vec![0.0; 3 + i], vec![0.0; 3 + i], vec![]).unwrap())
        .collect();
    let set = TrainingSet::new(seqs, &[4, 6]).unwrap();
    assert_eq!(set.members[1], (2..12).collect::<Vec<_>>());
    let mut rng = seeded(31);
    let mut counts = [0usize; 12];
    for _ in 0..10_000 {
        let mb = sample_minibatch(&set, 10, 1, &mut rng).unwrap();
        assert_eq!((mb.len, mb.batch), (6, 10));
        mb.indices.iter().for_each(|&i| counts[i] += 1);
    }
    assert_eq!(counts[..2], [0, 0]);
    let expected = 100_000.0 / 10.0;
    let chi2: f64 = counts[2..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < CRITICAL_9_DOF_1PCT, "chi-square {chi2:.2}, counts {counts:?}");

    let a = batch_schedule(&set, 50, 4, 7).unwrap();
    assert_eq!(a, batch_schedule(&set, 50, 4, 7).unwrap());
    assert_ne!(a, batch_schedule(&set, 50, 4, 8).unwrap());
    assert!(a.iter().any(|b| b.group == 0) && a.iter().any(|b| b.group == 1));
}

#[test]
fn simulated_records_start_at_zero_strain() {
    let e = build_ensemble(&EnsembleConfig { d_gamma: 5, n_fiber: 2, ..Default::default() }).unwrap();
    let p = generate_random_path(&RandomWalkConfig { delta_r: 1e-2, delta_r_min: 1e-3, ..Default::default() }).unwrap();
    let res = run_sequence(&p, &e);
    let rec = SequenceRecord::from_simulation(&p, &res, 5, 7);
    assert_eq!(rec.length, p.len());
    assert_eq!(rec.input_row(0), &[0.0, 0.0, 0.0]);
    assert!(rec.gamma[..5].iter().all(|&g| g == 0.0));
    assert!(!rec.is_truncated());
}

proptest! {
    #[test]
    fn normalization_round_trip(rows in prop::collection::vec(prop::array::uniform4(-1e4f64..1e4), 1..40)) {
        let spec = NormalizationSpec::fit(rows.iter().map(|r| &r[..]), 4).unwrap();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let back = spec.denormalize(&spec.normalize(&flat));
        for (a, b) in flat.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pad_trim_shape(len in 1usize..300, target in 1usize..300) {
        let idx = pad_trim_index(len, target);
        prop_assert_eq!(idx.len(), target);
        if len >= target {
            prop_assert!(idx.iter().enumerate().all(|(i, &j)| i == j));
        } else if len == 1 {
            // first and last step coincide
            prop_assert!(idx.iter().all(|&i| i == 0));
        } else {
            let m1 = idx.iter().take_while(|&&i| i == 0).count() - 1;
            let m2 = idx.iter().rev().take_while(|&&i| i == len - 1).count() - 1;
            prop_assert_eq!(m1 + m2, target - len);
            prop_assert!(m2 == m1 || m2 == m1 + 1);
            prop_assert!(idx.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 1));
        }
    }

    #[test]
    fn pre_trim_bounds_the_field(seed in any::<u64>(), crit in 0.2f64..0.9) {
        let rec = synthetic_record(30, 4, 2, seed);
        let cut = pre_trim(&rec, crit, Family::Gamma).unwrap();
        prop_assert!(cut.gamma.iter().all(|&g| g <= crit));
        prop_assert!(cut.length == rec.length || rec.field_row(Family::Gamma, cut.length).iter().any(|&g| g > crit));
    }
}
