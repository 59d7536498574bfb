//! Numerical rank with two independent backends.
//!
//! Rank decisions drive every completability verdict in this crate, and a
//! straight floating-point rank of a large matrix is easy to get wrong. Two
//! backends guard each other: an SVD count against a relative tolerance, and
//! exact Gaussian elimination over a random prime field for matrices with
//! integer entries. [`rank_with_consensus`] runs both and flags disagreement.

pub mod gf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for the SVD backend: singular values above
/// `rel_tol * sigma_max * max(rows, cols)` count toward the rank.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBackend {
    SvdTol,
    FiniteField,
}

/// Outcome of a rank computation plus the diagnostics needed to audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub computed_rank: usize,
    /// Rank the caller compared against; set by the completability tests.
    pub target_rank: Option<usize>,
    pub backend: RankBackend,
    /// Singular values, descending (SVD backend only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    /// sigma_r / sigma_{r+1}; infinite when the tail is exactly zero.
    /// Serialized as null when infinite or undefined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_ratio: Option<f64>,
    /// Field characteristic (finite-field backend only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prime: Option<u64>,
    /// Set by [`rank_with_consensus`]: true when the backends disagreed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_disagreement: Option<bool>,
}

impl RankReport {
    pub fn with_target(mut self, target: usize) -> Self {
        self.target_rank = Some(target);
        self
    }
}

/// Numerical rank from the singular value spectrum.
///
/// Counts singular values above `rel_tol * sigma_max * max(rows, cols)`.
pub fn svd_rank(a: &DMatrix<f64>, rel_tol: f64) -> Result<RankReport> {
    assert!(rel_tol > 0.0, "rel_tol must be positive");
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(RankReport {
            computed_rank: 0,
            target_rank: None,
            backend: RankBackend::SvdTol,
            spectrum: Some(Vec::new()),
            gap_ratio: None,
            prime: None,
            consensus_disagreement: None,
        });
    }
    let spectrum = singular_values_desc(a)?;
    let sigma_max = spectrum[0];
    let threshold = rel_tol * sigma_max * rows.max(cols) as f64;
    let rank = spectrum.iter().take_while(|&&s| s > threshold).count();
    let gap_ratio = if rank == 0 {
        None
    } else {
        let next = spectrum.get(rank).copied().unwrap_or(0.0);
        if next == 0.0 {
            Some(f64::INFINITY)
        } else {
            Some(spectrum[rank - 1] / next)
        }
    };
    Ok(RankReport {
        computed_rank: rank,
        target_rank: None,
        backend: RankBackend::SvdTol,
        spectrum: Some(spectrum),
        gap_ratio,
        prime: None,
        consensus_disagreement: None,
    })
}

/// Singular values of `a`, descending. Falls back through a generous
/// iteration cap before reporting non-convergence.
pub(crate) fn singular_values_desc(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = a.shape();
    let svd = nalgebra::SVD::try_new_unordered(a.clone(), false, false, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed { rows, cols })?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).expect("singular values are finite"));
    Ok(s)
}

/// Exact rank of an integer matrix over GF(p).
///
/// With `prime = None` the field characteristic is derived from a fingerprint
/// of the matrix, so the default is deterministic per input while still
/// varying across inputs.
pub fn finite_field_rank(a: &DMatrix<i64>, prime: Option<u64>) -> RankReport {
    let (rows, cols) = a.shape();
    let entries = row_major(a);
    let p = prime.unwrap_or_else(|| {
        gf::prime_from_seed(gf::fingerprint(rows, cols, entries.iter().copied()))
    });
    let rank = if rows == 0 || cols == 0 {
        0
    } else {
        gf::rank_mod_p(&entries, rows, cols, p)
    };
    RankReport {
        computed_rank: rank,
        target_rank: None,
        backend: RankBackend::FiniteField,
        spectrum: None,
        gap_ratio: None,
        prime: Some(p),
        consensus_disagreement: None,
    }
}

/// [`finite_field_rank`] for a float matrix whose entries must already be
/// exact integers.
pub fn finite_field_rank_f64(a: &DMatrix<f64>, prime: Option<u64>) -> Result<RankReport> {
    Ok(finite_field_rank(&to_integer(a)?, prime))
}

/// Runs both backends on an integer matrix. Returns the finite-field result
/// with `consensus_disagreement` set; disagreement is a flag, not an error.
pub fn rank_with_consensus(a: &DMatrix<i64>, rel_tol: f64) -> Result<RankReport> {
    let exact = finite_field_rank(a, None);
    let float = svd_rank(&a.map(|x| x as f64), rel_tol)?;
    let mut report = exact;
    report.consensus_disagreement = Some(report.computed_rank != float.computed_rank);
    report.spectrum = float.spectrum;
    report.gap_ratio = float.gap_ratio;
    Ok(report)
}

pub(crate) fn to_integer(a: &DMatrix<f64>) -> Result<DMatrix<i64>> {
    let mut out = DMatrix::<i64>::zeros(a.nrows(), a.ncols());
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            let v = a[(row, col)];
            if v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
                return Err(Error::NonIntegerEntry { value: v, row, col });
            }
            out[(row, col)] = v as i64;
        }
    }
    Ok(out)
}

fn row_major(a: &DMatrix<i64>) -> Vec<i64> {
    let (rows, cols) = a.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(a[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use rand::Rng;

    #[test]
    fn zero_matrix_has_rank_zero() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let r = svd_rank(&a, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 0);
        assert!(r.gap_ratio.is_none());
    }

    #[test]
    fn identity_rank_and_gap() {
        let a = DMatrix::<f64>::identity(4, 4);
        let r = svd_rank(&a, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 4);
        assert_eq!(r.gap_ratio, Some(f64::INFINITY));
    }

    #[test]
    fn tiny_singular_value_below_tolerance() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-15]));
        let r = svd_rank(&a, 1e-9).unwrap();
        assert_eq!(r.computed_rank, 1);
        assert!(r.gap_ratio.unwrap() > 1e13);
    }

    #[test]
    fn finite_field_identity() {
        let a = DMatrix::<i64>::identity(5, 5);
        let r = finite_field_rank(&a, Some(gf::prime_from_seed(11)));
        assert_eq!(r.computed_rank, 5);
        assert_eq!(r.prime, Some(gf::prime_from_seed(11)));
    }

    #[test]
    fn finite_field_proportional_rows() {
        let a = DMatrix::from_row_slice(2, 2, &[2i64, 4, 1, 2]);
        assert_eq!(finite_field_rank(&a, None).computed_rank, 1);
    }

    #[test]
    fn consensus_on_identity() {
        let a = DMatrix::<i64>::identity(3, 3);
        let r = rank_with_consensus(&a, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 3);
        assert_eq!(r.consensus_disagreement, Some(false));
    }

    #[test]
    fn consensus_on_zero_wide() {
        let a = DMatrix::<i64>::zeros(2, 5);
        let r = rank_with_consensus(&a, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 0);
        assert_eq!(r.consensus_disagreement, Some(false));
    }

    #[test]
    fn consensus_on_scaled_hilbert() {
        // H[i][j] = lcm / (i + j + 1) for an 8x8 Hilbert-like matrix, kept in
        // integers so the exact backend applies; badly conditioned on purpose.
        // The true rank is 8 but the spectrum dips below the SVD tolerance,
        // which is exactly what the disagreement flag is for.
        let n = 8;
        let lcm: i64 = 360360; // lcm(1..=15)
        let a = DMatrix::from_fn(n, n, |i, j| lcm / (i + j + 1) as i64);
        let r = rank_with_consensus(&a, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 8, "exact backend sees full rank");
        assert_eq!(r.consensus_disagreement, Some(true));
    }

    #[test]
    fn cross_backend_random_10x10() {
        let mut rng = rng_from_seed(1);
        let a = DMatrix::from_fn(10, 10, |_, _| rng.gen_range(-9i64..=9));
        let exact = finite_field_rank(&a, None).computed_rank;
        let float = svd_rank(&a.map(|x| x as f64), DEFAULT_REL_TOL)
            .unwrap()
            .computed_rank;
        assert_eq!(exact, float);
    }

    #[test]
    fn transpose_invariance_both_backends() {
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let m = rng.gen_range(1..=12);
            let n = rng.gen_range(1..=12);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-10i64..=10));
            let at = a.transpose();
            assert_eq!(
                finite_field_rank(&a, Some(gf::prime_from_seed(5))).computed_rank,
                finite_field_rank(&at, Some(gf::prime_from_seed(5))).computed_rank
            );
            let af = a.map(|x| x as f64);
            assert_eq!(
                svd_rank(&af, DEFAULT_REL_TOL).unwrap().computed_rank,
                svd_rank(&af.transpose(), DEFAULT_REL_TOL)
                    .unwrap()
                    .computed_rank
            );
        }
    }

    #[test]
    fn product_rank_bound() {
        let mut rng = rng_from_seed(21);
        for _ in 0..50 {
            let m = rng.gen_range(1..=8);
            let k = rng.gen_range(1..=8);
            let n = rng.gen_range(1..=8);
            let a = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-10i64..=10));
            let b = DMatrix::from_fn(k, n, |_, _| rng.gen_range(-10i64..=10));
            let ab = &a * &b;
            let ra = finite_field_rank(&a, None).computed_rank;
            let rb = finite_field_rank(&b, None).computed_rank;
            let rab = finite_field_rank(&ab, None).computed_rank;
            assert!(rab <= ra.min(rb));
        }
    }

    #[test]
    fn backends_agree_on_random_integer_matrices() {
        let mut rng = rng_from_seed(99);
        for trial in 0..100 {
            let m = rng.gen_range(1..=40);
            let n = rng.gen_range(1..=40);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-10i64..=10));
            let r = rank_with_consensus(&a, DEFAULT_REL_TOL).unwrap();
            assert_eq!(
                r.consensus_disagreement,
                Some(false),
                "disagreement on trial {trial} ({m}x{n})"
            );
        }
    }

    #[test]
    fn non_integer_rejected() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        assert!(matches!(
            finite_field_rank_f64(&a, None),
            Err(Error::NonIntegerEntry { .. })
        ));
    }
}
