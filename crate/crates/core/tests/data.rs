use fusformer::data::{
    cubic_weight, decimate, extract_patches, gaussian_blur, read_cube, simulate, spectral_project,
    synth_cube, synth_scene, tile_infer, tile_weight_map, upsample_bicubic, write_cube, Cube, DataError,
    SpectralResponse,
};
use fusformer::rng::Rng;
use proptest::prelude::*;

fn random_cube(seed: u64, h: usize, w: usize, c: usize) -> Cube {
    let mut rng = Rng::seed_from_u64(seed);
    Cube::from_fn(h, w, c, |_, _, _| rng.next_f64() as f32)
}

#[test]
fn hsc_file_round_trip_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.hsc");
    let c = random_cube(1, 5, 3, 4);
    write_cube(&path, &c).unwrap();
    assert_eq!(read_cube(&path).unwrap(), c);

    let one = Cube::new(1, 1, 1, vec![0.5]).unwrap();
    write_cube(&path, &one).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 28);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[..8].copy_from_slice(b"XXXXXXX\n");
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_cube(&path), Err(DataError::BadMagic { .. })));
}

#[test]
fn blur_of_constant_and_zero_sigma() {
    let c = Cube::from_fn(9, 7, 2, |_, _, b| 0.25 + 0.5 * b as f32);
    let blurred = gaussian_blur(&c, 1.7).unwrap();
    for (a, b) in blurred.data().iter().zip(c.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    let r = random_cube(2, 6, 6, 3);
    assert_eq!(gaussian_blur(&r, 0.0).unwrap(), r);
}

#[test]
fn blur_of_centred_impulse_is_the_kernel_outer_product() {
    let sigma = 1.0f64;
    let n = 15;
    let centre = 7;
    let mut c = Cube::zeros(n, n, 1);
    c.set(centre, centre, 0, 1.0);
    let out = gaussian_blur(&c, sigma).unwrap();

    let g: Vec<f64> = (-3i32..=3).map(|x| (-(x * x) as f64 / 2.0).exp()).collect();
    let z: f64 = g.iter().sum();
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as i32 - centre as i32, j as i32 - centre as i32);
            let want = if di.abs() <= 3 && dj.abs() <= 3 {
                g[(di + 3) as usize] * g[(dj + 3) as usize] / (z * z)
            } else {
                0.0
            };
            assert!((out.get(i, j, 0) as f64 - want).abs() < 1e-7, "({i},{j})");
            mass += out.get(i, j, 0) as f64;
        }
    }
    assert!((mass - 1.0).abs() < 1e-6);
}

#[test]
fn decimate_examples() {
    let r = random_cube(3, 4, 4, 2);
    assert_eq!(decimate(&r, 1).unwrap(), r);
    let k = Cube::from_fn(4, 4, 1, |_, _, _| 0.7);
    assert_eq!(decimate(&k, 4).unwrap().data(), &[0.7]);
    let d = decimate(&r, 2).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for b in 0..2 {
                assert_eq!(d.get(i, j, b), r.get(2 * i, 2 * j, b));
            }
        }
    }
}

#[test]
fn spectral_projection_examples_and_oracle() {
    let r = random_cube(4, 3, 4, 5);
    assert_eq!(spectral_project(&r, &SpectralResponse::identity(5)).unwrap(), r);

    let srf = SpectralResponse::default3(5);
    let flat = Cube::from_fn(2, 2, 5, |i, j, _| (i * 2 + j) as f32 * 0.2);
    let z = spectral_project(&flat, &srf).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for b in 0..3 {
                assert!((z.get(i, j, b) - flat.get(i, j, 0)).abs() < 1e-6);
            }
        }
    }

    let mut rng = Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.next_f64()).collect()).collect();
    let srf = SpectralResponse::new(rows).unwrap();
    let z = spectral_project(&r, &srf).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            for (o, row) in srf.rows().iter().enumerate() {
                let want: f64 = (0..5).map(|b| row[b] * r.get(i, j, b) as f64).sum();
                assert!((z.get(i, j, o) as f64 - want).abs() < 1e-6);
            }
        }
    }
    assert!(spectral_project(&random_cube(1, 2, 2, 4), &srf).is_err());
}

#[test]
fn bicubic_on_ramp_matches_direct_kernel_evaluation() {
    let (h, w, r) = (6usize, 6usize, 4usize);
    let ramp = Cube::from_fn(h, w, 1, |i, j, _| (0.1 * i as f64 + 0.05 * j as f64) as f32);
    let up = upsample_bicubic(&ramp, r).unwrap();
    let eval_axis = |d: usize, n: usize| -> Vec<(usize, f64)> {
        let s = (d as f64 + 0.5) / r as f64 - 0.5;
        let f = s.floor() as isize;
        (f - 1..=f + 2)
            .map(|q| (q.clamp(0, n as isize - 1) as usize, cubic_weight(s - q as f64)))
            .collect()
    };
    for di in 0..h * r {
        for dj in 0..w * r {
            let mut want = 0.0;
            for &(si, wi) in &eval_axis(di, h) {
                for &(sj, wj) in &eval_axis(dj, w) {
                    want += wi * wj * ramp.get(si, sj, 0) as f64;
                }
            }
            assert!((up.get(di, dj, 0) as f64 - want).abs() < 1e-6, "({di},{dj})");
        }
    }
    // away from the clamped border a linear ramp is reproduced exactly
    let sj = |d: usize| (d as f64 + 0.5) / r as f64 - 0.5;
    for dj in 6..w * r - 6 {
        let want = 0.1 * sj(10) + 0.05 * sj(dj);
        assert!((up.get(10, dj, 0) as f64 - want).abs() < 1e-6);
    }
}

#[test]
fn patch_extraction_counts_and_coverage() {
    let gt = random_cube(6, 16, 16, 4);
    let srf = SpectralResponse::default3(4);
    let sample = simulate(&gt, 4, 2.0, &srf).unwrap();
    let patches = extract_patches(&sample, 8, 8).unwrap();
    assert_eq!(patches.len(), 4);
    assert_eq!(extract_patches(&sample, 16, 4).unwrap().len(), 1);
    assert!(extract_patches(&sample, 6, 4).is_err());

    let p = &patches[3];
    assert_eq!(p.gt.dims(), (8, 8, 4));
    assert_eq!(p.lr.dims(), (2, 2, 4));
    assert_eq!(p.msi.dims(), (8, 8, 3));
    assert_eq!(p.gt.get(0, 0, 1), gt.get(8, 8, 1));
    assert_eq!(p.lr.get(1, 1, 2), sample.lr.get(3, 3, 2));
}

#[test]
fn simulate_is_documented_composition() {
    let gt = random_cube(7, 12, 8, 6);
    let srf = SpectralResponse::default3(6);
    let s = simulate(&gt, 4, 2.0, &srf).unwrap();
    assert_eq!(s.lr, decimate(&gaussian_blur(&gt, 2.0).unwrap(), 4).unwrap());
    assert_eq!(s.lr.dims(), (3, 2, 6));
    assert_eq!(s.msi, spectral_project(&gt, &srf).unwrap());
    assert_eq!(s.up, upsample_bicubic(&s.lr, 4).unwrap());
}

#[test]
fn synthetic_cubes_are_deterministic_bounded_mixtures() {
    let a = synth_cube(7, 24, 20, 9);
    assert_eq!(a, synth_cube(7, 24, 20, 9));
    assert_ne!(a, synth_cube(8, 24, 20, 9));
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));

    let scene = synth_scene(7, 24, 20, 9);
    let mut raw = vec![0.0f64; 24 * 20 * 9];
    for p in 0..24 * 20 {
        let total: f64 = scene.abundances.iter().map(|a| a[p]).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for b in 0..9 {
            for k in 0..scene.endmembers.len() {
                raw[p * 9 + b] += scene.abundances[k][p] * scene.endmembers[k][b];
            }
        }
    }
    let lo = raw.iter().cloned().fold(f64::MAX, f64::min);
    let hi = raw.iter().cloned().fold(f64::MIN, f64::max);
    for p in 0..24 * 20 {
        for b in 0..9 {
            let want = (raw[p * 9 + b] - lo) / (hi - lo);
            assert!((a.get(p / 20, p % 20, b) as f64 - want).abs() < 1e-6);
        }
    }
}

#[test]
fn degenerate_tiling_equals_direct_forward() {
    let up = random_cube(9, 12, 12, 3);
    let msi = random_cube(10, 12, 12, 2);
    let f = |u: &Cube, m: &Cube| -> Result<Cube, DataError> {
        Ok(Cube::from_fn(u.height(), u.width(), 3, |i, j, b| {
            u.get(i, j, b) * 0.5 + m.get(i, j, 0) * (i + j) as f32
        }))
    };
    let direct = f(&up, &msi).unwrap();
    assert_eq!(tile_infer(&up, &msi, 4, 12, 4, f).unwrap(), direct);
    assert_eq!(tile_infer(&up, &msi, 4, 16, 4, f).unwrap(), direct);
}

#[test]
fn constant_forward_gives_constant_blend() {
    let up = random_cube(1, 20, 16, 2);
    let msi = random_cube(2, 20, 16, 2);
    let f = |u: &Cube, _: &Cube| -> Result<Cube, DataError> {
        Ok(Cube::from_fn(u.height(), u.width(), 2, |_, _, _| 0.3))
    };
    for (tile, overlap) in [(8, 0), (8, 4), (12, 8), (4, 3)] {
        let out = tile_infer(&up, &msi, 4, tile, overlap, f).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }
}

#[test]
fn spectral_projection_keeps_unit_range() {
    let srf = SpectralResponse::default3(8);
    let z = spectral_project(&random_cube(3, 6, 6, 8), &srf).unwrap();
    assert!(z.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

proptest! {
    #[test]
    fn cube_bytes_round_trip(h in 1usize..6, w in 1usize..6, c in 1usize..5, seed in any::<u64>()) {
        let cube = random_cube(seed, h, w, c);
        let bytes = fusformer::data::io::encode_cube(&cube);
        let back = fusformer::data::io::decode_cube(&bytes).unwrap();
        prop_assert_eq!(fusformer::data::io::encode_cube(&back), bytes);
        prop_assert_eq!(back, cube);
    }

    #[test]
    fn tile_weights_sum_to_one(
        h in 4usize..40, w in 4usize..40, tile_q in 1usize..8, overlap in 0usize..16,
    ) {
        let tile = tile_q * 4;
        prop_assume!(overlap < tile);
        let (h, w) = (h * 2, w * 2);
        let weights = tile_weight_map(h, w, 4, tile, overlap).unwrap();
        for v in weights {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
