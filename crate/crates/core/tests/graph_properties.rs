use asrnn::graph::Elementwise;
use asrnn::{Graph, NodeId, RngStream, Tensor};
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut RngStream, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// A loss touching every differentiable op. Returns the loss and the leaves.
fn composite(g: &mut Graph, leaves: &[Tensor], bases: &[Tensor], targets: &[usize]) -> (NodeId, Vec<NodeId>) {
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let (w, x, b, v, s) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
    let wx = g.matmul(w, x).unwrap();
    let pre = g.add_bias(wx, b).unwrap();
    let th = g.tanh(pre);
    let sg = g.sigmoid(pre);
    let prod = g.mul(th, sg).unwrap();
    let diff = g.sub(prod, v).unwrap();
    let ex = g.exp(diff);
    let pos = g.affine(ex, 1.0, 0.5);
    let lg = g.log(pos).unwrap();
    let ng = g.neg(lg);
    let om = g.one_minus(ng);
    let sc = g.scale(om, 0.7);
    let ls = g.log_softmax(sc);
    let sm = g.softmax(s);
    let mixed = g.mix(sm, bases.to_vec()).unwrap();
    let total = g.add(ls, mixed).unwrap();
    let ce = g.cross_entropy_weighted(total, targets, &vec![0.5; targets.len()]).unwrap();
    let hd = g.elementwise(Elementwise::Hadamard, &[sg, sg]).unwrap();
    let reg = g.sum(hd);
    let loss = g.add(ce, reg).unwrap();
    (loss, ids)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn composite_gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let (r, k, c, j) = (3, 4, 2, 3);
        let leaves = vec![
            random(r, k, &mut rng, 1.0),
            random(k, c, &mut rng, 1.0),
            random(r, 1, &mut rng, 1.0),
            random(r, c, &mut rng, 1.0),
            random(j, c, &mut rng, 2.0),
        ];
        let bases: Vec<Tensor> = (0..j).map(|_| random(r, c, &mut rng, 1.0)).collect();
        let targets: Vec<usize> = (0..c).map(|_| rng.below(r as u64) as usize).collect();
        let mut g = Graph::new();
        let (loss, ids) = composite(&mut g, &leaves, &bases, &targets);
        g.backward(loss).unwrap();
        let eval = |ls: &[Tensor]| {
            let mut g = Graph::new();
            let (loss, _) = composite(&mut g, ls, &bases, &targets);
            g.value(loss).scalar_value()
        };
        let h = 1e-5;
        for (li, id) in ids.iter().enumerate() {
            let analytic = g.grad(*id).unwrap().clone();
            for e in 0..leaves[li].len() {
                let mut plus = leaves.clone();
                plus[li].data_mut()[e] += h;
                let mut minus = leaves.clone();
                minus[li].data_mut()[e] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[e];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                prop_assert!(rel < 1e-4, "leaf {li} entry {e}: analytic {a}, numeric {numeric}");
            }
        }
    }

    #[test]
    fn softmax_normalised_and_shift_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let mut g = Graph::new();
        let a = g.constant(Tensor::column(logits.clone()));
        let b = g.constant(Tensor::column(logits.iter().map(|v| v + shift).collect()));
        let sa = g.softmax(a);
        let sb = g.softmax(b);
        let total: f64 = g.value(sa).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (p, q) in g.value(sa).data().iter().zip(g.value(sb).data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_is_bit_identical(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let leaves = vec![
            random(3, 4, &mut rng, 1.0),
            random(4, 2, &mut rng, 1.0),
            random(3, 1, &mut rng, 1.0),
            random(3, 2, &mut rng, 1.0),
            random(3, 2, &mut rng, 2.0),
        ];
        let bases: Vec<Tensor> = (0..3).map(|_| random(3, 2, &mut rng, 1.0)).collect();
        let mut g = Graph::new();
        let (loss, ids) = composite(&mut g, &leaves, &bases, &[0, 2]);
        g.backward(loss).unwrap();
        let first: Vec<Vec<u64>> = ids
            .iter()
            .map(|id| g.grad(*id).unwrap().data().iter().map(|v| v.to_bits()).collect())
            .collect();
        g.zero_grad();
        g.backward(loss).unwrap();
        for (id, bits) in ids.iter().zip(&first) {
            let again: Vec<u64> = g.grad(*id).unwrap().data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(&again, bits);
        }
    }
}

#[test]
fn cross_entropy_saturated_logit() {
    let mut g = Graph::new();
    let mut logits = vec![0.0; 8];
    logits[0] = 50.0;
    let l = g.constant(Tensor::column(logits));
    let ce = g.cross_entropy(l, 0).unwrap();
    assert!(g.value(ce).scalar_value() < 1e-20);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::new();
    let i = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
    let x = g.constant(Tensor::column(vec![3.0, 4.0]));
    let y = g.matmul(i, x).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0]);
}
