use proptest::prelude::*;
use rvefield::nn::*;
use rvefield::rng::seeded;
use rand::Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate algebra written out term by term, independent of the library loops.
fn scripted_step(c: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c.n_h];
    for j in 0..c.n_h {
        let mut a = [0.0f64; 3];
        let mut b = [0.0f64; 3];
        for g in 0..3 {
            a[g] = c.bx[g][j];
            for i in 0..c.n_i {
                a[g] += c.wx[g][j * c.n_i + i] * x[i];
            }
            b[g] = c.bh[g][j];
            for k in 0..c.n_h {
                b[g] += c.wh[g][j * c.n_h + k] * h[k];
            }
        }
        let u = sig(a[GATE_U] + b[GATE_U]);
        let r = sig(a[GATE_R] + b[GATE_R]);
        let cand = (a[GATE_C] + r * b[GATE_C]).tanh();
        out[j] = u * h[j] + (1.0 - u) * cand;
    }
    out
}

#[test]
fn gru_step_matches_scripted_oracle() {
    let mut rng = seeded(17);
    let arch = Architecture { nnw_in: vec![3, 2], n_h: 3, nnw_out: vec![3, 1] };
    let cell = RnnModel::new(&arch, 99).unwrap().gru;
    let mut h = vec![-1.0; 3];
    for _ in 0..20 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lib = gru_step(&cell, &x, &h);
        let oracle = scripted_step(&cell, &x, &h);
        for (a, b) in lib.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
        h = lib;
    }
}

#[test]
fn zero_input_converges_to_a_fixed_point() {
    let arch = Architecture { nnw_in: vec![3, 4], n_h: 5, nnw_out: vec![5, 2] };
    let m = RnnModel::new(&arch, 5).unwrap();
    let (y, _) = m.forward_sequence(&vec![0.0; 3 * 400]);
    assert_eq!(y.len(), 2 * 400);
    let (again, _) = m.forward_sequence(&vec![0.0; 3 * 400]);
    assert_eq!(y, again);
    let last = &y[2 * 399..];
    let prev = &y[2 * 398..2 * 399];
    assert!(last.iter().zip(prev).all(|(a, b)| (a - b).abs() < 1e-8));
}

fn small_model(seed: u64) -> RnnModel {
    let arch = Architecture { nnw_in: vec![3, 5], n_h: 4, nnw_out: vec![4, 6, 2] };
    RnnModel::new(&arch, seed).unwrap()
}

fn batch_data(seed: u64, batch: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let x: Vec<f64> = (0..batch * steps * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..batch * steps * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (to_time_major(&x, batch, steps, 3), to_time_major(&y, batch, steps, 2))
}

#[test]
fn bptt_matches_central_differences() {
    let model = small_model(7);
    let (steps, batch) = (3, 2);
    let (x, y) = batch_data(8, batch, steps);
    let (_, grad) = model.loss_and_gradient(&x, &y, steps, batch).unwrap();
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();

    let h = 1e-6;
    let mut k = 0;
    let n_tensors = model.tensors().len();
    for ti in 0..n_tensors {
        let len = model.tensors()[ti].len();
        for j in 0..len {
            let mut plus = model.clone();
            plus.tensors_mut()[ti][j] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[ti][j] -= h;
            let lp = mse_loss(plus.forward_batch(&x, steps, batch).outputs(), &y).unwrap();
            let lm = mse_loss(minus.forward_batch(&x, steps, batch).outputs(), &y).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic[k];
            let ok = (a - fd).abs() <= 1e-8 || (a - fd).abs() <= 1e-5 * fd.abs().max(a.abs());
            assert!(ok, "tensor {ti} entry {j}: analytic {a:e} vs finite difference {fd:e}");
            k += 1;
        }
    }
    assert_eq!(k, model.n_params());
}

#[test]
fn zero_error_batch_has_zero_gradient() {
    let model = small_model(9);
    let (x, _) = batch_data(10, 2, 4);
    let y = model.forward_batch(&x, 4, 2).outputs().to_vec();
    let (loss, grad) = model.loss_and_gradient(&x, &y, 4, 2).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)));
}

#[test]
fn batch_gradient_is_mean_of_sequence_gradients() {
    let model = small_model(11);
    let steps = 5;
    let (x, y) = batch_data(12, 2, steps);
    let (_, g2) = model.loss_and_gradient(&x, &y, steps, 2).unwrap();
    // Split the time-major block back into its two sequences.
    let pick = |v: &[f64], w: usize, b: usize| -> Vec<f64> {
        (0..steps).flat_map(|t| v[(t * 2 + b) * w..(t * 2 + b + 1) * w].to_vec()).collect()
    };
    let (_, ga) = model.loss_and_gradient(&pick(&x, 3, 0), &pick(&y, 2, 0), steps, 1).unwrap();
    let (_, gb) = model.loss_and_gradient(&pick(&x, 3, 1), &pick(&y, 2, 1), steps, 1).unwrap();
    for ((t2, ta), tb) in g2.tensors().iter().zip(ga.tensors()).zip(gb.tensors()) {
        for ((v2, va), vb) in t2.iter().zip(ta.iter()).zip(tb.iter()) {
            assert!((v2 - 0.5 * (va + vb)).abs() <= 1e-13 * (1.0 + v2.abs()));
        }
    }
}

#[test]
fn mse_matches_summation_oracle() {
    let mut rng = seeded(13);
    let a: Vec<f64> = (0..257).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let b: Vec<f64> = (0..257).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).powi(2);
    }
    assert!((mse_loss(&a, &b).unwrap() - s / 257.0).abs() <= 1e-14);
}

#[test]
fn adam_descends_a_quadratic_bowl() {
    let cfg = TrainConfig::default();
    let target = 0.5;
    let mut p = [0.0f64];
    let (mut m, mut v) = ([0.0], [0.0]);
    let mut losses = Vec::new();
    for t in 1..=100 {
        let g = 2.0 * (p[0] - target);
        losses.push((p[0] - target).powi(2));
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        adam_update(&mut p, &[g], &mut m, &mut v, &cfg, bc1, bc2);
    }
    for w in losses[5..].windows(2) {
        assert!(w[1] < w[0], "loss increased: {} -> {}", w[0], w[1]);
    }
    assert!(p[0] > 0.0 && p[0] < target);
}

#[test]
fn surrogate_one_gamma_architecture_count() {
    // NNW_I (3, 70), GRU 70 → 100, NNW_O (100, 800, 1607)
    let arch = Architecture { nnw_in: vec![3, 70], n_h: 100, nnw_out: vec![100, 800, 1607] };
    let expected = (3 + 1) * 70 + 3 * 100 * (100 + 70 + 2) + (100 + 1) * 800 + (800 + 1) * 1607;
    assert_eq!(arch.n_params(), expected);
    let m = RnnModel::new(&arch, 0).unwrap();
    let allocated: usize = m.tensors().iter().map(|t| t.len()).sum();
    assert_eq!(allocated, expected);
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig { n_epoch: 3, ..TrainConfig::default() };
    let (x, y) = batch_data(21, 3, 6);
    let run = || {
        let mut m = small_model(20);
        let mut opt = Adam::new(&m);
        for _ in 0..4 {
            train_on_batch(&mut m, &mut opt, &x, &y, 6, 3, &cfg).unwrap();
        }
        m
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn hidden_state_stays_bounded(seed in 0u64..1000, scale in 0.1f64..20.0) {
        let m = small_model(seed);
        let mut rng = seeded(seed ^ 0xabc);
        let x: Vec<f64> = (0..3 * 30).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let (_, hidden) = m.forward_sequence(&x);
        for h in hidden {
            prop_assert!(h.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn gates_are_open_interval(z in -30.0f64..30.0) {
        let s = sigmoid(z);
        prop_assert!(s > 0.0 && s < 1.0);
    }
}
