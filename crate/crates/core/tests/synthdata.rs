use std::time::Instant;

use uvdiff::ndtensor::{Stream, StreamId};
use uvdiff::synthdata::*;

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_item_dataset() {
    let d = make_dataset(1, 16, 3).unwrap();
    assert_eq!(d.items.shape(), &[1, 10, 16, 16]);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.ndt");
    write_dataset(&p, &d).unwrap();
    let back = read_dataset(&p).unwrap();
    assert_eq!(back, d);
}

#[test]
fn records_satisfy_quad_invariants() {
    let d = make_dataset(24, 16, 11).unwrap();
    for i in 0..d.len() {
        let q = d.quad(i).unwrap();
        let shaded = q.maps.shade(&d.lights[i]).unwrap();
        assert!(max_abs(&shaded, &q.texture) <= 1e-5, "item {i}");
        for v in q.maps.diffuse.iter().chain(&q.maps.specular) {
            assert!((0.0..=1.0).contains(v));
        }
        assert!(q.maps.specular.iter().all(|&v| v <= 0.6 + 1e-6));
        let px = 16 * 16;
        for k in 0..px {
            let n = [q.maps.normals[k], q.maps.normals[px + k], q.maps.normals[2 * px + k]];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-4 && n[2] > 0.0);
        }
        assert!((d.lights[i].direction.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn same_seed_reproduces_file_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_dataset(&a, &make_dataset(8, 16, 5).unwrap()).unwrap();
    write_dataset(&b, &make_dataset(8, 16, 5).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = make_dataset(8, 16, 6).unwrap();
    assert_ne!(c.items, make_dataset(8, 16, 5).unwrap().items);
}

#[test]
fn reflectance_is_deterministic() {
    let layout = ChannelLayout::default();
    let a = gen_reflectance(&mut Stream::new(9, StreamId::Data), 16, layout).unwrap();
    let b = gen_reflectance(&mut Stream::new(9, StreamId::Data), 16, layout).unwrap();
    assert_eq!(a, b);
}

#[test]
fn diffuse_albedo_diversity() {
    let layout = ChannelLayout::default();
    let maps: Vec<_> = (0..100)
        .map(|s| {
            gen_reflectance(&mut Stream::new(s, StreamId::Data), 32, layout)
                .unwrap()
                .diffuse
        })
        .collect();
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            let d: f64 = maps[i].iter().zip(&maps[j]).map(|(a, b)| (a - b).abs()).sum();
            total += d / maps[i].len() as f64;
            pairs += 1;
        }
    }
    let mean = total / pairs as f64;
    assert!(mean > 0.05, "pairwise mean abs diff {mean}");
}

#[test]
fn default_dataset_generates_quickly() {
    let start = Instant::now();
    let d = make_dataset(2048, 32, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(d.len(), 2048);
    assert!(secs < 60.0, "took {secs:.1}s");
}

#[test]
fn rejects_zero_count() {
    assert!(make_dataset(0, 16, 0).is_err());
}
