use crate::{Error, Result};

/// Remaps each channel of `input` (planar, `channels` planes) so that its
/// empirical CDF follows the matching channel of `reference`. The map is
/// monotone: the texel of rank `k` receives the reference quantile at
/// `k / n`. Output is clamped to `[0, 1]`.
pub fn histogram_match(input: &[f64], reference: &[f64], channels: usize) -> Result<Vec<f64>> {
    if channels == 0 || input.len() % channels != 0 || reference.len() % channels != 0 {
        return Err(Error::InvalidArgument("histogram_match: channel count mismatch".into()));
    }
    let n = input.len() / channels;
    let m = reference.len() / channels;
    let mut out = vec![0.0; input.len()];
    for c in 0..channels {
        let src = &input[c * n..(c + 1) * n];
        let mut sorted_ref = reference[c * m..(c + 1) * m].to_vec();
        sorted_ref.sort_by(f64::total_cmp);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| src[a].total_cmp(&src[b]));
        for (rank, &i) in order.iter().enumerate() {
            let q = (rank * m) / n;
            out[c * n + i] = sorted_ref[q.min(m - 1)].clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::{Stream, StreamId};

    #[test]
    fn identity_when_reference_is_input() {
        let mut rng = Stream::new(3, StreamId::Data);
        let x: Vec<f64> = (0..3 * 256).map(|_| rng.uniform()).collect();
        let y = histogram_match(&x, &x, 3).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 1.0 / 256.0);
        }
    }

    #[test]
    fn constant_reference_gives_constant() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let y = histogram_match(&x, &[0.42; 50], 1).unwrap();
        assert!(y.iter().all(|&v| v == 0.42));
    }

    #[test]
    fn deciles_follow_reference() {
        let mut rng = Stream::new(4, StreamId::Data);
        let x: Vec<f64> = (0..1024).map(|_| rng.uniform().powi(3)).collect();
        let r: Vec<f64> = (0..1024).map(|_| 0.2 + 0.6 * rng.uniform().sqrt()).collect();
        let y = histogram_match(&x, &r, 1).unwrap();
        let decile = |v: &[f64], k: usize| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s[k * (s.len() - 1) / 10]
        };
        for k in 1..10 {
            assert!((decile(&y, k) - decile(&r, k)).abs() < 0.02, "decile {k}");
        }
        // monotone map preserves ordering
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        assert!(idx.windows(2).all(|w| y[w[0]] <= y[w[1]]));
    }
}
