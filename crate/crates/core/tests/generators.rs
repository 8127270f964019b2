mod common;

use std::io::Write;

use common::*;
use forest_mixture::generators::{
    column_overlap, forest_model, is_forest, load_idx_images, mean_bias, region_block_model, sample_fmm,
    window_model, FmmSpec, ImageGrid, IDX3_MAGIC,
};
use forest_mixture::{
    blocks_conditionally_independent, exact_posterior, fm_run, jensen_gap, optimal_aux, Error, Matrix,
    VariationalState,
};

#[test]
fn single_pixel_windows_form_a_forest() {
    let grid = ImageGrid::mnist();
    let model = window_model(grid, 1, vec![0.0; 784], 1.0, 1.0).unwrap();
    assert_eq!(model.m(), 784);
    assert!(is_forest(&model));
    let q = VariationalState::prior(&model);
    let (eps, _) = optimal_aux(&model, &q).unwrap().to_dense();
    for i in 0..784 {
        let row = eps.row(i);
        assert_eq!(row.iter().filter(|&&e| e == 1.0).count(), 1);
        assert_eq!(row.iter().filter(|&&e| e == 0.0).count(), 783);
    }
}

/// `sum_i C(k_i, 2)` with `k_i` the number of windows covering pixel `i`,
/// counted by scanning every anchor.
fn overlap_by_enumeration(side: usize, s: usize) -> f64 {
    let mut cover = vec![0u64; side * side];
    for r in 0..side {
        for c in 0..side {
            for rr in r..side.min(r + s) {
                for cc in c..side.min(c + s) {
                    cover[rr * side + cc] += 1;
                }
            }
        }
    }
    cover.iter().map(|&k| (k * k.saturating_sub(1) / 2) as f64).sum()
}

#[test]
fn window_overlap_grows_with_side() {
    let grid = ImageGrid::mnist();
    let overlaps: Vec<f64> = [3, 7, 15]
        .iter()
        .map(|&s| {
            let model = window_model(grid, s, vec![0.0; 784], 1.0, 1.0).unwrap();
            let o = column_overlap(&model);
            assert_eq!(o, overlap_by_enumeration(28, s));
            o
        })
        .collect();
    assert!(overlaps[0] < overlaps[1] && overlaps[1] < overlaps[2]);
}

#[test]
fn region_blocks_default_layout() {
    let grid = ImageGrid::mnist();
    let (model, part) = region_block_model(grid, 7, vec![0.0; 784], 1.0, 1.0).unwrap();
    assert_eq!(model.m(), 784);
    assert_eq!(part.len(), 16);
    assert!(part.blocks().iter().all(|b| b.len() == 49));
    assert!(blocks_conditionally_independent(&model, &part).unwrap());
    let owner = part.block_of();
    let p = model.pattern();
    for i in 0..784 {
        let first = p.row_entries(i).next().map(|(j, _)| owner[j]).unwrap();
        assert!(p.row_entries(i).all(|(j, _)| owner[j] == first));
    }
    let small = ImageGrid::new(14, 14).unwrap();
    let (_, part) = region_block_model(small, 7, vec![0.0; 196], 1.0, 1.0).unwrap();
    assert_eq!(part.len(), 4);
    assert!(matches!(
        region_block_model(ImageGrid::new(28, 27).unwrap(), 7, vec![0.0; 756], 1.0, 1.0),
        Err(Error::IndivisibleGrid { .. })
    ));
}

#[test]
fn forests_converge_in_one_iteration() {
    let model = forest_model(2, &[0, 1], &[1.0, 2.0], vec![0.0, 0.0], 1.0, 1.0).unwrap();
    assert_eq!(model.weights().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
    let mut r = rng(21);
    for _ in 0..20 {
        let model = random_forest(&mut r, 60, 12);
        let x = random_observation(&mut r, model.n());
        assert_eq!(jensen_gap(&model, &random_state(&mut r, model.m())).unwrap(), 0.0);
        let (q, trace) = fm_run(&model, &x, &VariationalState::prior(&model), 3).unwrap();
        let post = exact_posterior(&model, &x).unwrap();
        let rows = trace.rows();
        assert!((rows[1].ridge_loss - rows[3].ridge_loss).abs() <= 1e-12 * (1.0 + rows[3].ridge_loss));
        for (a, b) in q.mu().iter().zip(&post.mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn fmm_parent_frequencies() {
    let prior = [0.2, 0.5, 0.3];
    let n = 100_000;
    let rows: Vec<[f64; 3]> = vec![prior; n];
    let spec = FmmSpec::new(
        Matrix::from_rows(&rows).unwrap(),
        1.0,
        1.0,
        Matrix::zeros(n, 3),
        Matrix::zeros(n, 3),
    )
    .unwrap();
    let sample = sample_fmm(&spec, 99);
    for (j, &p) in prior.iter().enumerate() {
        let freq = sample.e.iter().filter(|&&e| e == j).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "parent {j}: {freq} vs {p}");
    }
    assert_eq!(sample, sample_fmm(&spec, 99));
}

#[test]
fn fmm_noiseless_limit() {
    let spec = FmmSpec::new(
        Matrix::from_rows(&[[0.5, 0.5], [0.1, 0.9]]).unwrap(),
        2.0,
        1e-12,
        Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap(),
        Matrix::from_rows(&[[0.2, 0.4], [-0.1, 0.0]]).unwrap(),
    )
    .unwrap();
    for seed in 0..20 {
        let s = sample_fmm(&spec, seed);
        for i in 0..2 {
            let j = s.e[i];
            let clean = spec.edge_biases().get(i, j) + spec.edge_weights().get(i, j) * s.y[j];
            assert!((s.x[i] - clean).abs() < 1e-4);
        }
    }
}

#[test]
fn idx_round_trip_through_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let mut bytes = Vec::new();
    for v in [IDX3_MAGIC, 2, 2, 2] {
        bytes.extend(v.to_be_bytes());
    }
    bytes.extend([0u8, 255, 102, 153, 255, 0, 255, 0]);
    file.write_all(&bytes).unwrap();
    let parsed = load_idx_images(file.path()).unwrap();
    assert_eq!(parsed.grid, ImageGrid::new(2, 2).unwrap());
    let scale = |v: u8| 2.0 * (f64::from(v) / 255.0) - 1.0;
    assert_eq!(parsed.images[0], vec![-1.0, 1.0, scale(102), scale(153)]);
    assert_eq!(parsed.images[1], vec![1.0, -1.0, 1.0, -1.0]);
    let bias = mean_bias(&parsed.images, 1000, 4).unwrap();
    assert!(bias.iter().all(|b| (-1.0..=1.0).contains(b)));
    assert!(matches!(load_idx_images(file.path().with_extension("missing")), Err(Error::Io(_))));
}
