//! Reverse-mode gradients against central finite differences (64-bit).

use uvdiff::denoiser::gradcheck_end_to_end;
use uvdiff::ndtensor::gradcheck::{check, op_suite};
use uvdiff::ndtensor::{Stream, StreamId, Tape, Var};

#[test]
fn every_op_matches_finite_differences() {
    for (name, err) in op_suite().unwrap() {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn check_detects_a_wrong_gradient() {
    // relu's subgradient at the kink differs from the symmetric difference.
    let x = uvdiff::ndtensor::Tensor::new(&[3], vec![0.0, 1.0, -1.0]).unwrap();
    let errs = check(&[x], &|t, v| {
        let r = t.relu(v[0])?;
        t.sum(r)
    })
    .unwrap();
    assert!(errs[0] > 1e-2);
}

#[test]
fn denoiser_end_to_end() {
    let (input, params) = gradcheck_end_to_end(3, 3).unwrap();
    assert!(input < 1e-3, "input: relative error {input:e}");
    assert!(params < 1e-3, "parameters: relative error {params:e}");
}

#[test]
fn backward_is_linear() {
    let x = Stream::new(20, StreamId::Custom(0)).normal_tensor::<f64>(&[6]);
    let grad_of = |build: &dyn Fn(&mut Tape<f64>, Var) -> Var| {
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let l = build(&mut t, v);
        t.backward(l).unwrap().get(v).unwrap().unwrap().clone()
    };
    let l1 = |t: &mut Tape<f64>, v: Var| {
        let s = t.silu(v).unwrap();
        t.sum(s).unwrap()
    };
    let l2 = |t: &mut Tape<f64>, v: Var| {
        let m = t.mul(v, v).unwrap();
        t.mean(m).unwrap()
    };
    let (a, b) = (0.6, -1.7);
    let combined = grad_of(&|t, v| {
        let x1 = l1(t, v);
        let x2 = l2(t, v);
        let s1 = t.scale(x1, a).unwrap();
        let s2 = t.scale(x2, b).unwrap();
        t.add(s1, s2).unwrap()
    });
    let g1 = grad_of(&l1);
    let g2 = grad_of(&l2);
    for i in 0..x.len() {
        let expect = a * g1.data()[i] + b * g2.data()[i];
        assert!((combined.data()[i] - expect).abs() < 1e-12);
    }
}
