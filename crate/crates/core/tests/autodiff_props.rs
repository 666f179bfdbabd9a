use proptest::prelude::*;

use rbm::autodiff::gradcheck::check_gradients;
use rbm::autodiff::{Axis, Optimizer, OptimizerConfig, ParamStore, Tape, Tensor};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.5f64..1.5, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn composite_graph_matches_finite_differences(
        w in matrix(3, 4),
        x in matrix(2, 3),
        b in matrix(1, 4),
        v in matrix(4, 2),
        pick in prop::collection::vec(0usize..2, 1..4),
    ) {
        let mut store = ParamStore::new();
        let (w, x, b, v) = (store.add("w", w), store.add("x", x), store.add("b", b), store.add("v", v));
        let report = check_gradients(&store, 1e-5, |t| {
            let (w, x, b, v) = (t.param(w), t.param(x), t.param(b), t.param(v));
            let xw = t.matmul(x, w)?;
            let pre = t.add_row(xw, b)?;
            let h = t.tanh(pre);
            let s = t.softmax(h);
            let ls = t.log_softmax(h);
            let g = t.gather_rows(h, &pick)?;
            let gs = t.sigmoid(g);
            let gv = t.matmul(gs, v)?;
            let cols = t.slice(s, Axis::Cols, 1, 2)?;
            let stacked = t.concat(&[cols, gv], Axis::Rows)?;
            let sq = t.mul(stacked, stacked)?;
            let col = t.sum_rows(sq)?;
            let tr = t.transpose(ls)?;
            let m = t.mean(tr);
            let shifted = t.affine(s, 1.0, 0.5);
            let logs = t.log(shifted);
            let ls_sum = t.sum(logs);
            let c = t.sum(col);
            let d = t.sub(c, m)?;
            t.add(d, ls_sum)
        }).unwrap();
        prop_assert!(report.max_rel_err < 1e-4, "{:?}", report);
    }

    #[test]
    fn adagrad_never_increases_a_convex_quadratic_much(target in prop::collection::vec(-2.0f64..2.0, 3), lr in 0.01f64..0.5) {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::row(vec![0.0; 3]));
        let goal = Tensor::row(target.clone());
        let mut opt = Optimizer::new(OptimizerConfig::adagrad(lr), &store);
        let loss_of = |s: &ParamStore| -> f64 {
            s.get(p).data().iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()
        };
        let start = loss_of(&store);
        for _ in 0..200 {
            let grads = {
                let mut t = Tape::new(&store);
                let pv = t.param(p);
                let gv = t.constant(goal.clone());
                let diff = t.sub(pv, gv).unwrap();
                let sq = t.mul(diff, diff).unwrap();
                let loss = t.sum(sq);
                t.backward(loss).unwrap()
            };
            opt.step(&mut store, &grads).unwrap();
        }
        prop_assert!(loss_of(&store) <= start + 1e-12);
    }
}

#[test]
fn backward_twice_is_an_error() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::row(vec![1.0, 2.0]));
    let mut t = Tape::new(&store);
    let v = t.param(p);
    let loss = t.sum(v);
    t.backward(loss).unwrap();
    assert!(t.backward(loss).is_err());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::row(vec![1.0, 2.0]));
    let mut t = Tape::new(&store);
    let v = t.param(p);
    assert!(t.backward(v).is_err());
}
