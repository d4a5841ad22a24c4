//! Cells against straight-line re-implementations written with plain loops.

use asrnn::cells::{run_sequence, CellKind, Model, ModelSpec, ParamSet, RunOptions, ScaleMode, Unroller};
use asrnn::dataset::Dataset;
use asrnn::sampler::gumbel_noise;
use asrnn::tasks::{Target, TaskExample};
use asrnn::trainer::{evaluate, EvalOptions};
use asrnn::{RngStream, Tensor};

fn spec(cell: CellKind, mode: ScaleMode, m: usize, n: usize, j: usize, k: usize) -> ModelSpec {
    ModelSpec {
        cell,
        mode,
        hidden: m,
        input: n,
        classes: 3,
        num_scales: j,
        kernel_size: k,
        tau: 0.5,
        hard_forward: false,
    }
}

/// Random weights everywhere, biases included.
fn random_model(spec: ModelSpec, seed: u64) -> Model {
    let mut rng = RngStream::new(seed);
    let (names, tensors): (Vec<String>, Vec<Tensor>) = spec
        .param_shapes()
        .into_iter()
        .map(|(name, [r, c])| {
            let data = (0..r * c).map(|_| rng.uniform(-0.8, 0.8)).collect();
            (name, Tensor::from_vec(r, c, data).unwrap())
        })
        .unzip();
    Model::from_params(spec, ParamSet::new(names, tensors).unwrap()).unwrap()
}

fn example(steps: usize, dim: usize, label: u16, rng: &mut RngStream) -> TaskExample {
    TaskExample {
        frames: (0..steps * dim).map(|_| rng.uniform(-2.0, 2.0) as f32).collect(),
        dim,
        target: Target::Label(label),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W h + U x + b` for one gate.
fn affine(p: &ParamSet, gate: &str, h: &[f64], x: &[f64]) -> Vec<f64> {
    let w = p.get(&format!("W_{gate}")).unwrap();
    let u = p.get(&format!("U_{gate}")).unwrap();
    let b = p.get(&format!("b_{gate}")).unwrap();
    (0..w.rows())
        .map(|i| {
            let mut s = b.get(i, 0);
            for k in 0..h.len() {
                s += w.get(i, k) * h[k];
            }
            for k in 0..x.len() {
                s += u.get(i, k) * x[k];
            }
            s
        })
        .collect()
}

fn haar(k: usize) -> Vec<f64> {
    (0..k).map(|i| if i < k.div_ceil(2) { 1.0 } else { -1.0 }).collect()
}

/// Direct dilated sum with zero padding.
fn filtered(frames: &[f64], n: usize, t: usize, j: usize, k: usize) -> Vec<f64> {
    let h = haar(k);
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (tap, w) in h.iter().enumerate() {
                let off = (1usize << j) * tap;
                if off <= t {
                    s += w * frames[(t - off) * n + i];
                }
            }
            s
        })
        .collect()
}

/// Logits of the head after running the whole sequence; `noise` supplies
/// Gumbel draws for adaptive mode.
fn reference_logits(model: &Model, frames: &[f64], noise: &mut RngStream) -> Vec<f64> {
    let s = model.spec();
    let p = model.params();
    let (m, n) = (s.hidden, s.input);
    let steps = frames.len() / n;
    let mut h = vec![0.0; m];
    let mut c = vec![0.0; m];
    for t in 0..steps {
        let x: Vec<f64> = match s.mode {
            ScaleMode::Vanilla => frames[t * n..(t + 1) * n].to_vec(),
            ScaleMode::Fixed(j) => filtered(frames, n, t, j, s.kernel_size),
            ScaleMode::Adaptive => {
                let raw = &frames[t * n..(t + 1) * n];
                let z = affine(p, "s", &h, raw);
                let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                let g = gumbel_noise(s.num_scales, 1, noise);
                let a: Vec<f64> = (0..z.len()).map(|i| (z[i] - lse + g.data()[i]) / s.tau).collect();
                let am = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = a.iter().map(|v| (v - am).exp()).collect();
                let tot: f64 = e.iter().sum();
                let mut x = vec![0.0; n];
                for (j, ej) in e.iter().enumerate() {
                    let base = filtered(frames, n, t, j, s.kernel_size);
                    for i in 0..n {
                        x[i] += ej / tot * base[i];
                    }
                }
                x
            }
        };
        match s.cell {
            CellKind::Lstm => {
                let f = affine(p, "f", &h, &x);
                let ig = affine(p, "i", &h, &x);
                let o = affine(p, "o", &h, &x);
                let g = affine(p, "g", &h, &x);
                for q in 0..m {
                    c[q] = sigmoid(f[q]) * c[q] + sigmoid(ig[q]) * g[q].tanh();
                    h[q] = sigmoid(o[q]) * c[q].tanh();
                }
            }
            CellKind::Gru => {
                let z = affine(p, "z", &h, &x);
                let r = affine(p, "r", &h, &x);
                let rh: Vec<f64> = (0..m).map(|q| sigmoid(r[q]) * h[q]).collect();
                let g = affine(p, "g", &rh, &x);
                for q in 0..m {
                    let zq = sigmoid(z[q]);
                    h[q] = zq * h[q] + (1.0 - zq) * g[q].tanh();
                }
            }
        }
    }
    let (w, b) = (p.get("W_out").unwrap(), p.get("b_out").unwrap());
    (0..w.rows())
        .map(|i| b.get(i, 0) + (0..m).map(|q| w.get(i, q) * h[q]).sum::<f64>())
        .collect()
}

#[test]
fn full_sequences_match_reference() {
    let mut data_rng = RngStream::new(11);
    for cell in [CellKind::Lstm, CellKind::Gru] {
        for mode in [ScaleMode::Vanilla, ScaleMode::Fixed(2), ScaleMode::Adaptive] {
            let model = random_model(spec(cell, mode, 5, 2, 3, 4), 3);
            for trial in 0..5 {
                let ex = example(13, 2, 1, &mut data_rng);
                let noise = RngStream::new(100 + trial);
                let run = run_sequence(&model, &[&ex], &mut noise.clone(), RunOptions::default()).unwrap();
                let expect = reference_logits(&model, &ex.frames_f64(), &mut noise.clone());
                for (a, b) in run.outputs[0].data().iter().zip(&expect) {
                    assert!((a - b).abs() < 1e-10, "{cell} {}: {a} vs {b}", mode.name());
                }
            }
        }
    }
}

#[test]
fn single_gru_step_by_hand() {
    // m = n = 1, C = 3
    let s = ModelSpec {
        classes: 3,
        ..spec(CellKind::Gru, ScaleMode::Vanilla, 1, 1, 1, 1)
    };
    let col = |v: &[f64]| Tensor::column(v.to_vec());
    let names = ["W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_g", "U_g", "b_g", "W_out", "b_out"];
    let tensors = vec![
        col(&[0.0]),
        col(&[1.0]),
        col(&[0.0]),
        col(&[0.0]),
        col(&[0.0]),
        col(&[0.0]),
        col(&[0.0]),
        col(&[2.0]),
        col(&[0.0]),
        col(&[1.0, 0.0, -1.0]),
        col(&[0.0, 0.0, 0.0]),
    ];
    let model = Model::from_params(
        s,
        ParamSet::new(names.iter().map(|n| n.to_string()).collect(), tensors).unwrap(),
    )
    .unwrap();
    let ex = TaskExample {
        frames: vec![0.5],
        dim: 1,
        target: Target::Label(0),
    };
    let run = run_sequence(&model, &[&ex], &mut RngStream::new(0), RunOptions::default()).unwrap();
    // z = σ(0.5), g = tanh(1), h = (1 − z)·g since h₀ = 0
    let h = (1.0 - sigmoid(0.5)) * 1f64.tanh();
    let logits = [h, 0.0, -h];
    let mx = h;
    let lse = mx + logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    assert!((run.loss_value() - (lse - h)).abs() < 1e-14);
}

#[test]
fn lstm_states_stay_bounded() {
    let mut data_rng = RngStream::new(5);
    for seed in 0..10 {
        let model = random_model(spec(CellKind::Lstm, ScaleMode::Adaptive, 6, 3, 3, 4), seed);
        let ex = example(40, 3, 0, &mut data_rng);
        let mut un = Unroller::new(&model, &[&ex], RunOptions::default()).unwrap();
        let mut state = un.initial_state();
        let mut rng = RngStream::new(seed);
        for t in 0..40 {
            state = un.step(t, state, &mut rng).unwrap().0;
            assert!(un.value(state.h).data().iter().all(|v| v.abs() < 1.0));
            let bound = (t + 1) as f64;
            assert!(un.value(state.c.unwrap()).data().iter().all(|v| v.abs() <= bound));
        }
    }
}

fn strip_sampler(model: &Model, mode: ScaleMode) -> Model {
    let p = model.params();
    let (names, tensors): (Vec<String>, Vec<Tensor>) = p
        .names()
        .iter()
        .zip(p.tensors())
        .filter(|(n, _)| !n.ends_with("_s"))
        .map(|(n, t)| (n.clone(), t.clone()))
        .unzip();
    let s = ModelSpec {
        mode,
        ..model.spec().clone()
    };
    Model::from_params(s, ParamSet::new(names, tensors).unwrap()).unwrap()
}

#[test]
fn fixed_mode_equals_forced_adaptive_exactly() {
    let mut data_rng = RngStream::new(8);
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let adaptive = random_model(spec(cell, ScaleMode::Adaptive, 4, 2, 3, 4), 21);
        let last = 2;
        let fixed = strip_sampler(&adaptive, ScaleMode::Fixed(last));
        let examples: Vec<TaskExample> = (0..6).map(|i| example(25, 2, i % 3, &mut data_rng)).collect();
        let forced = RunOptions {
            force_scale: Some(last),
            ..RunOptions::default()
        };
        for ex in &examples {
            let a = run_sequence(&adaptive, &[ex], &mut RngStream::new(0), forced).unwrap();
            let f = run_sequence(&fixed, &[ex], &mut RngStream::new(0), RunOptions::default()).unwrap();
            assert_eq!(a.outputs, f.outputs);
            assert_eq!(a.loss_value().to_bits(), f.loss_value().to_bits());
        }
        let ds = Dataset::new(vec![], examples);
        let ea = evaluate(
            &adaptive,
            &ds,
            &EvalOptions {
                force_scale: Some(last),
                ..EvalOptions::default()
            },
            &mut RngStream::new(1),
        )
        .unwrap();
        let ef = evaluate(&fixed, &ds, &EvalOptions::default(), &mut RngStream::new(1)).unwrap();
        assert_eq!(ea, ef);
        assert_eq!((ef.scale.min, ef.scale.max, ef.scale.mean()), (2, 2, 2.0));
    }
}

#[test]
fn replay_with_same_seed_is_bit_identical() {
    let model = random_model(spec(CellKind::Gru, ScaleMode::Adaptive, 5, 2, 3, 4), 2);
    let mut data_rng = RngStream::new(1);
    let batch: Vec<TaskExample> = (0..4).map(|i| example(20, 2, i % 3, &mut data_rng)).collect();
    let refs: Vec<&TaskExample> = batch.iter().collect();
    let mut runs = (0..2).map(|_| {
        let mut run = run_sequence(&model, &refs, &mut RngStream::new(77), RunOptions::default()).unwrap();
        let grads = run.gradients().unwrap();
        (run.loss_value().to_bits(), grads, run.traces)
    });
    let (a, b) = (runs.next().unwrap(), runs.next().unwrap());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn traces_have_one_record_per_step_within_range() {
    let model = random_model(spec(CellKind::Lstm, ScaleMode::Adaptive, 4, 1, 4, 8), 6);
    let ex = example(33, 1, 0, &mut RngStream::new(2));
    let run = run_sequence(&model, &[&ex], &mut RngStream::new(3), RunOptions::default()).unwrap();
    assert_eq!(run.traces[0].len(), 33);
    for (t, tr) in run.traces[0].iter().enumerate() {
        assert_eq!(tr.t, t);
        assert!(tr.hard < 4);
        assert!((tr.y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
