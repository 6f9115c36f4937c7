//! Decompositions and closed-form maps cross-checked against nalgebra.

use lfa::eval::pca_project;
use lfa::linalg::{pinv, svd, svd_thin};
use lfa::procrustes::orthogonal_procrustes_raw;
use lfa::{least_squares_map, Mat, Rng};
use nalgebra::DMatrix;

fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn max_diff(a: &Mat<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!((a.rows(), a.cols()), b.shape());
    let mut worst = 0.0f64;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            worst = worst.max((a[(r, c)] - b[(r, c)]).abs());
        }
    }
    worst
}

#[test]
fn singular_values_match_nalgebra() {
    let mut rng = Rng::new(1);
    for _ in 0..40 {
        let d = 1 + rng.below(9);
        let m: Mat<f64> = rng.gaussian_matrix(d, d, 1.0);
        let ours = svd(&m).unwrap();
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.sigma.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b), "{a} vs {b}");
        }
        assert!(ours.reconstruct().sub(&m).unwrap().max_abs() < 1e-10);
    }
}

#[test]
fn thin_svd_of_tall_matrices() {
    let mut rng = Rng::new(2);
    for _ in 0..20 {
        let n = 2 + rng.below(6);
        let rows = n + rng.below(10);
        let m: Mat<f64> = rng.gaussian_matrix(rows, n, 1.0);
        let f = svd_thin(&m).unwrap();
        assert!(f.reconstruct().sub(&m).unwrap().max_abs() < 1e-10);
        let utu = f.u.t_matmul(&f.u).unwrap();
        assert!(utu.sub(&Mat::identity(n)).unwrap().max_abs() < 1e-10);
    }
}

#[test]
fn pseudo_inverse_matches_nalgebra() {
    let mut rng = Rng::new(3);
    for _ in 0..30 {
        let r = 1 + rng.below(7);
        let c = 1 + rng.below(7);
        let m: Mat<f64> = rng.gaussian_matrix(r, c, 1.0);
        let theirs = to_na(&m).pseudo_inverse(1e-10).unwrap();
        assert!(max_diff(&pinv(&m).unwrap(), &theirs) < 1e-8);
    }
    // rank-deficient: a duplicated column
    let base: Mat<f64> = rng.gaussian_matrix(6, 3, 1.0);
    let m = Mat::from_fn(6, 4, |r, c| base[(r, c.min(2))]);
    let theirs = to_na(&m).pseudo_inverse(1e-10).unwrap();
    assert!(max_diff(&pinv(&m).unwrap(), &theirs) < 1e-8);
}

#[test]
fn procrustes_matches_nalgebra_polar_factor() {
    let mut rng = Rng::new(4);
    for _ in 0..30 {
        let d = 2 + rng.below(7);
        let n = d + rng.below(20);
        let x: Mat<f64> = rng.gaussian_matrix(n, d, 1.0);
        let t: Mat<f64> = rng.gaussian_matrix(n, d, 1.0);
        let m = to_na(&x).transpose() * to_na(&t);
        let s = m.svd(true, true);
        let expect = s.u.unwrap() * s.v_t.unwrap();
        let w = orthogonal_procrustes_raw(&x, &t).unwrap();
        assert!(max_diff(&w.data, &expect) < 1e-8);
    }
}

#[test]
fn least_squares_matches_normal_equations() {
    let mut rng = Rng::new(5);
    for _ in 0..20 {
        let d = 2 + rng.below(6);
        let n = 2 * d + rng.below(10);
        let s: Mat<f64> = rng.gaussian_matrix(n, d, 1.0);
        let t: Mat<f64> = rng.gaussian_matrix(n, d, 1.0);
        let (sn, tn) = (to_na(&s), to_na(&t));
        let expect = (sn.transpose() * &sn).try_inverse().unwrap() * sn.transpose() * tn;
        let w = least_squares_map(&s, &t).unwrap();
        assert!(max_diff(&w.data, &expect) < 1e-8);
    }
}

#[test]
fn pca_matches_covariance_eigenvectors() {
    let mut rng = Rng::new(6);
    for &(m, d) in &[(40, 5), (6, 9), (25, 3)] {
        // anisotropic cloud so eigenvalues are well separated
        let raw: Mat<f64> = rng.gaussian_matrix(m, d, 1.0);
        let points = Mat::from_fn(m, d, |r, c| raw[(r, c)] * (d - c) as f64 + 0.3);
        let k = 2;
        let ours = pca_project(&points, k).unwrap();
        let centered = {
            let mut p = to_na(&points);
            let mean = p.row_mean();
            for mut row in p.row_iter_mut() {
                row -= &mean;
            }
            p
        };
        let cov = centered.transpose() * &centered / (m as f64 - 1.0);
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (j, &e) in order.iter().take(k).enumerate() {
            assert!((ours.variances[j] - eig.eigenvalues[e]).abs() < 1e-8 * (1.0 + eig.eigenvalues[e]));
            // axes agree up to sign
            let dotp: f64 = (0..d).map(|r| ours.components[(r, j)] * eig.eigenvectors[(r, e)]).sum();
            assert!((dotp.abs() - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn f32_procrustes_is_orthogonal() {
    let mut rng = Rng::new(7);
    let x: Mat<f32> = rng.gaussian_matrix(30, 8, 1.0);
    let t: Mat<f32> = rng.gaussian_matrix(30, 8, 1.0);
    let w = orthogonal_procrustes_raw(&x, &t).unwrap();
    assert!(w.orthogonality_error() < 1e-4);
    let w64 = orthogonal_procrustes_raw(&x.cast::<f64>(), &t.cast::<f64>()).unwrap();
    assert!(w.data.cast::<f64>().sub(&w64.data).unwrap().max_abs() < 1e-4);
}
