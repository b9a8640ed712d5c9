use crate::ndtensor::{Real, Tensor};

/// `[sin(t w_0), .., sin(t w_{d/2-1}), cos(t w_0), ..]` with
/// `w_k = 10000^(-k / (d/2))`, one row per timestep.
pub fn timestep_embedding<F: Real>(ts: &[usize], dim: usize) -> Tensor<F> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let t = t as f64;
        let freqs = (0..half).map(|k| (-(10000f64).ln() * k as f64 / half as f64).exp());
        let rows: Vec<f64> = freqs.collect();
        data.extend(rows.iter().map(|w| F::from_f64c((t * w).sin())));
        data.extend(rows.iter().map(|w| F::from_f64c((t * w).cos())));
        data.extend((2 * half..dim).map(|_| F::zero()));
    }
    Tensor::new(&[ts.len(), dim], data).expect("embedding shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_timesteps_have_distinct_codes() {
        let ts: Vec<usize> = (1..=1000).collect();
        let e = timestep_embedding::<f64>(&ts, 64);
        assert_eq!(e.shape(), &[1000, 64]);
        let rows: Vec<&[f64]> = e.data().chunks(64).collect();
        for i in 0..rows.len() {
            for j in i + 1..(i + 50).min(rows.len()) {
                let d: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b).abs()).sum();
                assert!(d > 1e-6, "t={} and t={} collide", i + 1, j + 1);
            }
        }
        // first frequency is 1: sin(t) separates every integer pair
        let mut firsts: Vec<(i64, i64)> = rows
            .iter()
            .map(|r| ((r[0] * 1e9) as i64, (r[32] * 1e9) as i64))
            .collect();
        firsts.sort();
        firsts.dedup();
        assert_eq!(firsts.len(), 1000);
    }
}
