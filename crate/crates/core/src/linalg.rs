//! Dense matrix routines shared by the phase-space algebra and the readout:
//! matrix exponential, Moore–Penrose inverse, PSD square root and spectral
//! radius. Decompositions (SVD, symmetric eigen, Schur) come from `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative singular-value cutoff used by [`moore_penrose`].
pub const PINV_RCOND: f64 = 1e-12;

/// Eigenvalues in `[-PSD_CLIP_TOL, 0)` are clipped to zero by [`matrix_sqrt_psd`].
pub const PSD_CLIP_TOL: f64 = 1e-10;

// Padé(13) coefficients for scaling and squaring (Higham 2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dim("expm", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let nrm = norm1(a);
    let squarings = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numerical("singular Padé denominator in expm".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Moore–Penrose pseudo-inverse via SVD, discarding singular values below
/// `PINV_RCOND` times the largest one.
pub fn moore_penrose(a: &Mat) -> Mat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Mat::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RCOND * s_max;
    let k = svd.singular_values.len();
    // V Σ⁺ Uᵀ, assembled as (Σ⁺ Vᵀ)ᵀ Uᵀ
    let mut scaled_vt = v_t;
    for i in 0..k {
        let s = svd.singular_values[i];
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        scaled_vt.row_mut(i).scale_mut(inv);
    }
    scaled_vt.transpose() * u.transpose()
}

/// Largest asymmetry `max |A - Aᵀ|`.
pub fn asymmetry(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root `B` of a PSD matrix, `B·B = A`.
pub fn matrix_sqrt_psd(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::dim("matrix_sqrt_psd", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut roots = eig.eigenvalues.clone();
    for lam in roots.iter_mut() {
        if *lam < -PSD_CLIP_TOL {
            return Err(Error::Numerical(format!(
                "matrix_sqrt_psd: eigenvalue {lam:e} below tolerance -{PSD_CLIP_TOL:e}"
            )));
        }
        *lam = lam.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    Ok(symmetrize(&(scaled * q.transpose())))
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(a: &Mat) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
        (a - b).abs().max()
    }

    /// Truncated Taylor series, summed until terms vanish; adequate for small norms.
    fn expm_taylor(a: &Mat) -> Mat {
        let n = a.nrows();
        let mut term = Mat::identity(n, n);
        let mut sum = term.clone();
        for k in 1..200 {
            term = &term * a / k as f64;
            sum += &term;
            if term.abs().max() < 1e-20 {
                break;
            }
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Mat::zeros(4, 4);
        assert_eq!(expm(&z).unwrap(), Mat::identity(4, 4));
    }

    #[test]
    fn expm_matches_taylor_series() {
        let a = Mat::from_row_slice(3, 3, &[0.1, 0.4, -0.2, 0.3, -0.5, 0.7, 0.0, 0.2, 0.1]);
        assert!(max_abs_diff(&expm(&a).unwrap(), &expm_taylor(&a)) < 1e-13);
        // large norm forces squarings
        let big = &a * 20.0;
        let via_halves = {
            let h = expm_taylor(&(&big / 64.0));
            let mut r = h;
            for _ in 0..6 {
                r = &r * &r;
            }
            r
        };
        let e = expm(&big).unwrap();
        assert!(max_abs_diff(&e, &via_halves) / e.abs().max() < 1e-11);
    }

    #[test]
    fn expm_rotation_generator() {
        let t = std::f64::consts::FRAC_PI_2;
        let g = Mat::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&g).unwrap();
        let expect = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(max_abs_diff(&e, &expect) < 1e-14);
    }

    #[test]
    fn moore_penrose_identity_and_rank_deficient() {
        assert!(max_abs_diff(&moore_penrose(&Mat::identity(3, 3)), &Mat::identity(3, 3)) < 1e-15);
        let a = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = moore_penrose(&a);
        assert!(max_abs_diff(&(&a * &p * &a), &a) < 1e-12);
        assert!(max_abs_diff(&(&p * &a * &p), &p) < 1e-12);
        let ap = &a * &p;
        let pa = &p * &a;
        assert!(asymmetry(&ap) < 1e-12);
        assert!(asymmetry(&pa) < 1e-12);
    }

    #[test]
    fn moore_penrose_of_zero_is_zero_transpose_shape() {
        let p = moore_penrose(&Mat::zeros(2, 3));
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.abs().max(), 0.0);
    }

    #[test]
    fn sqrt_psd_diag_and_clip() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let b = matrix_sqrt_psd(&a).unwrap();
        assert!(max_abs_diff(&b, &Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]))) < 1e-14);

        let tiny_neg = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -5e-11]));
        let b = matrix_sqrt_psd(&tiny_neg).unwrap();
        assert_eq!(b[(1, 1)], 0.0);

        let bad = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-6]));
        assert!(matches!(matrix_sqrt_psd(&bad), Err(Error::Numerical(_))));
    }

    #[test]
    fn spectral_radius_rotation_generator() {
        let g = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&g), 1.0, epsilon = 1e-14);
        let d = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -3.0]);
        assert_relative_eq!(spectral_radius(&d), 3.0, epsilon = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
            proptest::collection::vec(-3.0f64..3.0, rows * cols)
                .prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
        }

        proptest! {
            #[test]
            fn penrose_identities(a in small_matrix(5, 3)) {
                let p = moore_penrose(&a);
                let scale = a.abs().max().max(1.0);
                prop_assert!((&a * &p * &a - &a).abs().max() < 1e-8 * scale);
                prop_assert!((&p * &a * &p - &p).abs().max() < 1e-8 * p.abs().max().max(1.0));
                prop_assert!(asymmetry(&(&a * &p)) < 1e-8);
                prop_assert!(asymmetry(&(&p * &a)) < 1e-8);
            }

            #[test]
            fn sqrt_squares_back(a in small_matrix(4, 4)) {
                let psd = &a * a.transpose();
                let b = matrix_sqrt_psd(&psd).unwrap();
                prop_assert!((&b * &b - &psd).abs().max() < 1e-8 * psd.abs().max().max(1.0));
                prop_assert!(asymmetry(&b) < 1e-12);
            }
        }
    }
}
