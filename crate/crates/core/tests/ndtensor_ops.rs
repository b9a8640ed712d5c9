use uvdiff::ndtensor::{kernels, set_checked_mode, Tape, Tensor};
use uvdiff::Error;

fn t32(shape: &[usize], v: &[f32]) -> Tensor<f32> {
    Tensor::new(shape, v.to_vec()).unwrap()
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::<f32>::new();
    let a = t.leaf(t32(&[2], &[1., 2.]));
    let b = t.leaf(t32(&[2], &[3., 4.]));
    let s = t.add(a, b).unwrap();
    assert_eq!(t.value(s).data(), &[4., 6.]);
    let z = t.scale(a, 0.0).unwrap();
    assert_eq!(t.value(z), &Tensor::zeros(&[2]));
    let c = t.constant(Tensor::zeros(&[1]));
    let si = t.silu(c).unwrap();
    assert_eq!(t.value(si).item(), 0.0);
    let bad = t.leaf(Tensor::zeros(&[3]));
    assert!(matches!(t.add(a, bad), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn matmul_examples() {
    let a = t32(&[2, 2], &[1., 2., 3., 4.]);
    let eye = t32(&[2, 2], &[1., 0., 0., 1.]);
    assert_eq!(kernels::matmul(&a, &eye).unwrap(), a);
    let ones = t32(&[2, 1], &[1., 1.]);
    assert_eq!(kernels::matmul(&a, &ones).unwrap().data(), &[3., 7.]);
    assert!(kernels::matmul(&a, &t32(&[3, 1], &[1., 1., 1.])).is_err());
}

#[test]
fn conv_examples() {
    let x: Tensor<f32> = Tensor::from_f64(&[1, 1, 4, 5], &(0..20).map(|v| v as f64).collect::<Vec<_>>()).unwrap();
    let mut delta = Tensor::zeros(&[1, 1, 3, 3]);
    delta.data_mut()[4] = 1.0;
    assert_eq!(kernels::conv2d(&x, &delta, None, 1, 1).unwrap(), x);

    let c = Tensor::full(&[1, 1, 5, 5], 0.5f32);
    let y = kernels::conv2d(&c, &Tensor::ones(&[1, 1, 3, 3]), None, 1, 1).unwrap();
    assert_eq!(y.data()[2 * 5 + 2], 4.5);
    assert_eq!(y.data()[0], 2.0); // corner sees a 2x2 window

    let s2 = kernels::conv2d(&c, &Tensor::ones(&[2, 1, 3, 3]), None, 2, 1).unwrap();
    assert_eq!(s2.shape(), &[1, 2, 3, 3]);
    assert!(kernels::conv2d(&c, &Tensor::ones(&[1, 2, 3, 3]), None, 1, 1).is_err());
}

#[test]
fn group_norm_examples() {
    let x = Tensor::full(&[1, 4, 3, 3], 2.5f64);
    let gain = Tensor::from_f64(&[4], &[1., 2., 3., 4.]).unwrap();
    let bias = Tensor::from_f64(&[4], &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let (y, _) = kernels::group_norm(&x, 2, &gain, &bias).unwrap();
    for c in 0..4 {
        for v in &y.data()[c * 9..(c + 1) * 9] {
            assert!((v - bias.data()[c]).abs() < 1e-12);
        }
    }
    let r: Tensor<f64> =
        uvdiff::ndtensor::Stream::new(3, uvdiff::ndtensor::StreamId::Custom(1)).normal_tensor(&[2, 4, 3, 3]);
    let (y, _) = kernels::group_norm(&r, 2, &Tensor::ones(&[4]), &Tensor::zeros(&[4])).unwrap();
    for g in 0..4 {
        let seg = &y.data()[g * 18..(g + 1) * 18];
        let m: f64 = seg.iter().sum::<f64>() / 18.0;
        assert!(m.abs() < 1e-5);
    }
    assert!(kernels::group_norm(&r, 3, &Tensor::ones(&[4]), &Tensor::zeros(&[4])).is_err());
}

#[test]
fn backward_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::scalar(3.0));
    let sq = t.mul(x, x).unwrap();
    let g = t.backward(sq).unwrap();
    assert_eq!(g.get(x).unwrap().unwrap().item(), 6.0);

    let mut t = Tape::<f64>::new();
    let xs = [0.5, -1.0, 2.0];
    let ys = [1.5, 1.0, -2.0];
    let x = t.leaf(Tensor::from_f64(&[3], &xs).unwrap());
    let y = t.constant(Tensor::from_f64(&[3], &ys).unwrap());
    let d = t.sub(x, y).unwrap();
    let d2 = t.mul(d, d).unwrap();
    let l = t.sum(d2).unwrap();
    let g = t.backward(l).unwrap();
    let gx = g.get(x).unwrap().unwrap();
    for i in 0..3 {
        assert_eq!(gx.data()[i], 2.0 * (xs[i] - ys[i]));
    }
    assert!(g.get(y).unwrap().is_none());

    assert!(matches!(t.backward(d), Err(Error::NonScalarLoss(_))));
    let other = Tape::<f64>::new();
    let mut other = other;
    let foreign = other.leaf(Tensor::scalar(1.0));
    assert!(matches!(t.backward(foreign), Err(Error::ForeignVar)));
    assert!(matches!(g.get(foreign), Err(Error::ForeignVar)));
}

#[test]
fn no_grad_tape_matches_recording_tape() {
    let x: Tensor<f32> =
        uvdiff::ndtensor::Stream::new(1, uvdiff::ndtensor::StreamId::Custom(2)).normal_tensor(&[1, 2, 6, 6]);
    let w: Tensor<f32> =
        uvdiff::ndtensor::Stream::new(2, uvdiff::ndtensor::StreamId::Custom(2)).normal_tensor(&[4, 2, 3, 3]);
    let run = |mut t: Tape<f32>| {
        let xv = t.leaf(x.clone());
        let wv = t.leaf(w.clone());
        let y = t.conv2d(xv, wv, None, 1, 1).unwrap();
        let g = t.constant(Tensor::ones(&[4]));
        let b = t.constant(Tensor::zeros(&[4]));
        let n = t.group_norm(y, 2, g, b).unwrap();
        let s = t.silu(n).unwrap();
        t.value(s).clone()
    };
    assert_eq!(run(Tape::new()), run(Tape::no_grad()));
    let mut t = Tape::<f32>::no_grad();
    let v = t.leaf(Tensor::scalar(1.0));
    assert!(matches!(t.backward(v), Err(Error::NotRecording)));
}

#[test]
fn checked_mode_flags_non_finite() {
    set_checked_mode(true);
    let mut t = Tape::<f32>::new();
    let x = t.leaf(Tensor::scalar(f32::MAX));
    let r = t.scale(x, 10.0);
    set_checked_mode(false);
    assert!(matches!(r, Err(Error::NonFinite(_))));
}
