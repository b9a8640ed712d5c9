use crate::ndtensor::Stream;

/// Smooth value noise on an `r x r` grid from a `cells x cells` random
/// lattice in `[-1, 1]`, interpolated with smoothstep weights.
pub fn value_noise(rng: &mut Stream, r: usize, cells: usize) -> Vec<f64> {
    let n = cells + 1;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(r * r);
    for y in 0..r {
        let fy = (y as f64 + 0.5) / r as f64 * cells as f64;
        let iy = (fy.floor() as usize).min(cells - 1);
        let ty = smooth(fy - iy as f64);
        for x in 0..r {
            let fx = (x as f64 + 0.5) / r as f64 * cells as f64;
            let ix = (fx.floor() as usize).min(cells - 1);
            let tx = smooth(fx - ix as f64);
            let at = |i: usize, j: usize| lattice[j * n + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Sum of `octaves` noise layers starting at `base_cells`, frequency
/// doubling and amplitude halving per octave.
pub fn fractal_noise(rng: &mut Stream, r: usize, base_cells: usize, octaves: usize) -> Vec<f64> {
    let mut acc = vec![0.0; r * r];
    let mut amp = 1.0;
    for o in 0..octaves {
        let layer = value_noise(rng, r, base_cells << o);
        for (a, v) in acc.iter_mut().zip(layer) {
            *a += amp * v;
        }
        amp *= 0.5;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::StreamId;

    #[test]
    fn bounded_and_smooth() {
        let mut rng = Stream::new(1, StreamId::Data);
        let v = value_noise(&mut rng, 32, 4);
        assert!(v.iter().all(|x| x.abs() <= 1.0));
        let max_step = (0..31).map(|x| (v[x + 1] - v[x]).abs()).fold(0.0, f64::max);
        assert!(max_step < 0.5);
    }
}
