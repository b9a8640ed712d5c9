use uvdiff::inpaint::VisibilityMask;
use uvdiff::ndtensor::{Stream, StreamId};
use uvdiff::synthdata::{gen_reflectance, random_light, shade_uv, ChannelLayout, LightSpec, ReflectanceQuad};
use uvdiff::uvgeom::*;

fn model() -> MorphableModel {
    MorphableModel::synthetic(
        &mut Stream::new(0, StreamId::Custom(1)),
        &SyntheticModelConfig::default(),
    )
    .unwrap()
}

fn quad(seed: u64, r: usize) -> (ReflectanceQuad, LightSpec) {
    let mut rng = Stream::new(seed, StreamId::Data);
    let layout = ChannelLayout::default();
    let maps = gen_reflectance(&mut rng, r, layout).unwrap();
    let light = random_light(&mut rng);
    let t = maps.shade(&light).unwrap();
    (maps.with_texture(layout, t), light)
}

fn poses() -> [Pose; 3] {
    [
        Pose::new(0.0, 0.0, 0.0),
        Pose::new(55.0, -10.0, 0.0),
        Pose::new(-85.0, 12.0, 5.0),
    ]
}

fn masked_mae(a: &[f64], b: &[f64], mask: &VisibilityMask) -> f64 {
    let px = mask.data().len();
    let mut total = 0.0;
    let mut n = 0;
    for c in 0..3 {
        for i in 0..px {
            if mask.data()[i] == 1 {
                total += (a[c * px + i] - b[c * px + i]).abs();
                n += 1;
            }
        }
    }
    total / n.max(1) as f64
}

#[test]
fn render_unwrap_roundtrip() {
    let m = model();
    for (k, pose) in poses().iter().enumerate() {
        let mut rng = Stream::new(k as u64, StreamId::Custom(2));
        let (ps, pe) = m.sample_coefficients(&mut rng, 1.5, 0.8);
        let mesh = m.instantiate(&ps, &pe).unwrap();
        let cam = pose.camera(128, 128);
        let (q, light) = quad(k as u64, 32);
        let img = render(&mesh, &cam, &q, &light, 128, 128, [0.0; 3]).unwrap();
        let un = unwrap(&img, &mesh, &cam, 32).unwrap();
        let mae = masked_mae(&un.texture, &q.texture, &un.mask);
        eprintln!(
            "pose {k} {pose:?}: mask {:.3} raw {:.3} mae {mae:.4}",
            un.mask.fraction(),
            un.raw_mask.fraction()
        );
        assert!(mae < 2e-2, "pose {k}: mae {mae}");
        assert!(un.mask.is_subset_of(&un.raw_mask));
        assert!(
            (0.2..=0.8).contains(&un.mask.fraction()),
            "pose {k}: {}",
            un.mask.fraction()
        );
    }
}

#[test]
fn fit_recovers_coefficients() {
    let m = model();
    for (k, pose) in poses().iter().enumerate() {
        let mut rng = Stream::new(10 + k as u64, StreamId::Custom(2));
        let (ps, pe) = m.sample_coefficients(&mut rng, 1.5, 0.8);
        let mesh = m.instantiate(&ps, &pe).unwrap();
        let cam = pose.camera(128, 128);
        let lm = project_landmarks(&mesh, &cam, &m.landmarks);
        let fit = fit_morphable(&lm, &m, 1e-9).unwrap();
        let truth: Vec<f64> = ps.iter().chain(&pe).copied().collect();
        let est: Vec<f64> = fit.p_s.iter().chain(&fit.p_e).copied().collect();
        let err = truth.iter().zip(&est).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            / truth.iter().map(|a| a * a).sum::<f64>().sqrt();
        eprintln!(
            "pose {k}: residual {:.3e} rel err {err:.3e} iters {} {:?}",
            fit.residual,
            fit.history.len(),
            &fit.history[..3]
        );
        assert!(fit.residual < 1e-6 && err < 1e-2);
    }
}

#[test]
fn fit_history_is_non_increasing_and_default_ridge_recovers() {
    let m = model();
    let mut rng = Stream::new(77, StreamId::Custom(2));
    let (ps, pe) = m.sample_coefficients(&mut rng, 1.5, 0.8);
    let mesh = m.instantiate(&ps, &pe).unwrap();
    let lm = project_landmarks(&mesh, &poses()[1].camera(128, 128), &m.landmarks);
    let fit = fit_morphable(&lm, &m, 1e-3).unwrap();
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    let truth: Vec<f64> = ps.iter().chain(&pe).copied().collect();
    let est: Vec<f64> = fit.p_s.iter().chain(&fit.p_e).copied().collect();
    let err = truth.iter().zip(&est).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        / truth.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err < 1e-2, "{err}");
    fit.camera.validate().unwrap();
}

#[test]
fn fit_under_landmark_noise() {
    let m = model();
    let sigma = 0.5;
    let mut worst: f64 = 0.0;
    let mut mean = 0.0;
    for trial in 0..50u64 {
        let mut rng = Stream::new(trial, StreamId::Custom(3));
        let (ps, pe) = m.sample_coefficients(&mut rng, 1.5, 0.8);
        let mesh = m.instantiate(&ps, &pe).unwrap();
        let pose = poses()[trial as usize % 3];
        let mut lm = project_landmarks(&mesh, &pose.camera(128, 128), &m.landmarks);
        for p in &mut lm {
            p[0] += sigma * rng.normal();
            p[1] += sigma * rng.normal();
        }
        let fit = fit_morphable(&lm, &m, 1e-3).unwrap();
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
        worst = worst.max((fit.residual - sigma).abs());
        mean += fit.residual / 50.0;
    }
    eprintln!("noisy fit: mean residual {mean:.3}, worst |res - sigma| {worst:.3}");
    assert!(worst < 3.0 * sigma);
}

#[test]
fn mean_landmarks_give_near_zero_coefficients() {
    let m = model();
    let lm = project_landmarks(&m.mean, &poses()[0].camera(128, 128), &m.landmarks);
    let fit = fit_morphable(&lm, &m, 1e-2).unwrap();
    let norm = fit.p_s.iter().chain(&fit.p_e).map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn degenerate_landmarks_are_rejected() {
    let m = model();
    let line: Vec<[f64; 2]> = (0..m.landmarks.len()).map(|i| [i as f64, 2.0 * i as f64]).collect();
    assert!(matches!(
        fit_morphable(&line, &m, 1e-3),
        Err(uvdiff::Error::DegenerateLandmarks(_))
    ));
    assert!(fit_morphable(&line[..10], &m, 1e-3).is_err());
    let cfg = SyntheticModelConfig {
        landmarks: 5,
        ..SyntheticModelConfig::default()
    };
    let small = MorphableModel::synthetic(&mut Stream::new(0, StreamId::Custom(1)), &cfg).unwrap();
    let lm = project_landmarks(&small.mean, &poses()[0].camera(64, 64), &small.landmarks);
    assert!(matches!(
        fit_morphable(&lm, &small, 1e-3),
        Err(uvdiff::Error::DegenerateLandmarks(_))
    ));
}

#[test]
fn instantiate_is_affine_in_coefficients() {
    let m = model();
    let zero = m
        .instantiate(&vec![0.0; m.shape_size], &vec![0.0; m.expr_size])
        .unwrap();
    assert_eq!(zero, m.mean);
    let mut ps = vec![0.0; m.shape_size];
    ps[2] = 0.7;
    let mut pe = vec![0.0; m.expr_size];
    pe[1] = -0.4;
    let a = m.instantiate(&ps, &pe).unwrap();
    let col_s = m.shape_column(2);
    let col_e = m.expr_column(1);
    for (v, (x, x0)) in a.vertices.iter().zip(&m.mean.vertices).enumerate() {
        for k in 0..3 {
            let want = x0[k] + 0.7 * col_s[3 * v + k] - 0.4 * col_e[3 * v + k];
            assert!((x[k] - want).abs() < 1e-12);
        }
    }
    assert!(m.instantiate(&[0.0], &pe).is_err());
}

#[test]
fn bases_are_orthonormal() {
    let m = model();
    let cols: Vec<Vec<f64>> = (0..m.shape_size)
        .map(|k| m.shape_column(k).to_vec())
        .chain((0..m.expr_size).map(|k| m.expr_column(k).to_vec()))
        .collect();
    for i in 0..cols.len() {
        for j in 0..cols.len() {
            let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
        }
    }
}

#[test]
fn back_view_sees_almost_nothing() {
    let m = model();
    let (q, light) = quad(4, 32);
    let cam = Pose::new(180.0, 0.0, 0.0).camera(128, 128);
    let img = render(&m.mean, &cam, &q, &light, 128, 128, [0.0; 3]).unwrap();
    let un = unwrap(&img, &m.mean, &cam, 32).unwrap();
    assert!(un.mask.fraction() < 0.05, "{}", un.mask.fraction());

    let front = rasterize(&m.mean, &Pose::new(0.0, 0.0, 0.0).camera(128, 128), 128, 128).unwrap();
    let back = rasterize(&m.mean, &cam, 128, 128).unwrap();
    let front_faces: std::collections::HashSet<u32> = front.face.iter().copied().filter(|&f| f != NO_FACE).collect();
    assert!(back.face.iter().all(|f| *f == NO_FACE || !front_faces.contains(f)));
}

#[test]
fn flat_quad_render_matches_uv_shading() {
    let (q, light) = quad(6, 32);
    let mesh = Mesh::flat_quad(1.0, 8);
    let cam = Camera::new(48.0, IDENTITY, [64.0, 64.0]).unwrap();
    let clear = [0.25, 0.5, 0.75];
    let img = render(&mesh, &cam, &q, &light, 128, 128, clear).unwrap();
    let t = shade_uv(
        &q.maps.diffuse,
        &q.maps.specular,
        &q.maps.normals,
        &light,
        [0.0, 0.0, 1.0],
    )
    .unwrap();
    let tex = Image::new(3, 32, 32, t).unwrap();
    let (mut total, mut n) = (0.0, 0);
    let mut rgb = [0.0; 3];
    for row in 0..128 {
        for col in 0..128 {
            let (x, y) = ((col as f64 + 0.5 - 64.0) / 48.0, (64.0 - row as f64 - 0.5) / 48.0);
            let inside = x.abs() < 1.0 && y.abs() < 1.0;
            if !inside {
                if x.abs() > 1.01 || y.abs() > 1.01 {
                    for c in 0..3 {
                        assert_eq!(img.get(c, row, col), clear[c]);
                    }
                }
                continue;
            }
            let (u, v) = ((x + 1.0) / 2.0, (1.0 - y) / 2.0);
            tex.sample(u * 32.0, v * 32.0, &mut rgb);
            for c in 0..3 {
                total += (img.get(c, row, col) - rgb[c]).abs();
                n += 1;
            }
        }
    }
    let mae = total / n as f64;
    assert!(mae < 2e-2, "{mae}");
}

#[test]
fn nearer_triangle_wins_the_depth_test() {
    let v = vec![
        [-1.0, -1.0, 0.0],
        [1.0, -1.0, 0.0],
        [0.0, 1.0, 0.0],
        [-1.0, 1.0, 0.5],
        [1.0, 1.0, 0.5],
        [0.0, -1.0, 0.5],
    ];
    let uv = vec![[0.0, 1.0], [1.0, 1.0], [0.5, 0.0], [0.0, 0.0], [1.0, 0.0], [0.5, 1.0]];
    for order in [[[0, 1, 2], [3, 5, 4]], [[3, 5, 4], [0, 1, 2]]] {
        let mesh = Mesh::new(v.clone(), order.to_vec(), uv.clone()).unwrap();
        let cam = Camera::new(10.0, IDENTITY, [16.0, 16.0]).unwrap();
        let r = rasterize(&mesh, &cam, 32, 32).unwrap();
        let near = order.iter().position(|f| f[0] == 3).unwrap() as u32;
        let mut contested = 0;
        for i in 0..32 * 32 {
            if r.covered(i) && r.depth[i] > 0.25 {
                assert_eq!(r.face[i], near);
            }
            contested += (r.face[i] == near) as usize;
        }
        assert!(contested > 50);
        // Every covered pixel in the overlap belongs to the nearer triangle.
        let centre = 16 * 32 + 16;
        assert_eq!(r.face[centre], near);
        assert!((r.depth[centre] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn obj_and_model_roundtrip() {
    let m = model();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mesh.obj");
    m.mean.save_obj(&p).unwrap();
    let back = Mesh::load_obj(&p).unwrap();
    assert_eq!(back.faces, m.mean.faces);
    for (a, b) in back.vertices.iter().zip(&m.mean.vertices) {
        assert_eq!(a, b);
    }
    for (a, b) in back.uvs.iter().zip(&m.mean.uvs) {
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
    let mp = dir.path().join("model.ndt");
    m.save(&mp).unwrap();
    assert_eq!(MorphableModel::load(&mp).unwrap(), m);
    assert!(Mesh::from_obj("v 0 0 0\nf 1 2 3\n").is_err());
}

#[test]
fn png_roundtrip_within_quantisation() {
    let (q, _) = quad(8, 16);
    let img = Image::new(3, 16, 16, q.texture.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.png");
    img.save_png(&p).unwrap();
    let back = Image::load_png(&p).unwrap();
    assert_eq!((back.channels, back.height, back.width), (3, 16, 16));
    assert!(back
        .data
        .iter()
        .zip(&img.data)
        .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
}

#[test]
fn camera_validation() {
    assert!(Camera::new(1.0, rotation_ypr(0.3, -0.2, 0.1), [0.0, 0.0]).is_ok());
    assert!(Camera::new(0.0, IDENTITY, [0.0, 0.0]).is_err());
    let mirror = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    assert!(Camera::new(1.0, mirror, [0.0, 0.0]).is_err());
    assert!(Camera::new(1.0, [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0, 0.0]).is_err());
}

mod erosion {
    use proptest::prelude::*;
    use uvdiff::inpaint::VisibilityMask;
    use uvdiff::uvgeom::erode;

    proptest! {
        #[test]
        fn erosion_only_removes(bits in proptest::collection::vec(0u8..2, 64)) {
            let m = VisibilityMask::new(8, 8, bits).unwrap();
            let e = erode(&m);
            prop_assert!(e.is_subset_of(&m));
            prop_assert!(e.data().iter().all(|&v| v <= 1));
        }
    }

    #[test]
    fn full_mask_survives_erosion() {
        let m = VisibilityMask::ones(6, 6);
        assert_eq!(erode(&m), m);
        let mut holes = vec![1u8; 36];
        holes[14] = 0;
        let e = erode(&VisibilityMask::new(6, 6, holes).unwrap());
        assert_eq!(e.count(), 36 - 9);
    }
}
