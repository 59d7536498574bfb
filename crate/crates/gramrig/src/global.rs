//! Global completability: factorization of the data block, the criterion
//! matrix whose rank decides uniqueness of the Gram matrix, and the
//! reconstruction of that unique Gram matrix.
//!
//! Every configuration compatible with a rank-D data block is the orbit of
//! one factorization `data = (P0_st)^T P0_m` under `A` in GL(D):
//! `P_st = A^{-T} P0_st`, `P_m = A P0_m`. Knowledge on one side of the Gram
//! matrix pins `M = (A^T A)^{-1}` (state side) or `M = A^T A` (measurement
//! side) through the linear constraints `tr(B_j M) = G_j`. Those constraints
//! determine a symmetric M uniquely exactly when the criterion matrix, whose
//! columns are vectorized symmetrized products of data rows or columns, has
//! rank D(D+1)/2.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::TestBackend;
use crate::model::{
    gaussian_configuration, integer_configuration, DataMatrix, GramKnowledge, OmegaMask,
    ProblemShape,
};
use crate::rank::{
    finite_field_rank, gf, rank_with_consensus, svd_rank, RankReport, DEFAULT_REL_TOL,
};
use crate::seeding::{derive_seed, rng_from_seed};

/// Which Gram block the a priori knowledge lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    States,
    Measurements,
}

/// Rank-D factorization of a data matrix, with row/column permutations that
/// move an invertible D x D corner to the top left.
#[derive(Debug, Clone)]
pub struct Factorization {
    /// `D x W`; left factor of the permuted data matrix.
    pub p0_st: DMatrix<f64>,
    /// `D x VK`; right factor of the permuted data matrix.
    pub p0_m: DMatrix<f64>,
    /// Permuted row r corresponds to original row `row_perm[r]`.
    pub row_perm: Vec<usize>,
    /// Permuted column c corresponds to original column `col_perm[c]`.
    pub col_perm: Vec<usize>,
    /// Smallest singular value of the permuted leading D x D corner.
    pub corner_conditioning: f64,
    pub ambient_dim: usize,
    permuted: DMatrix<f64>,
    inv_row: Vec<usize>,
    inv_col: Vec<usize>,
}

impl Factorization {
    /// The permuted data matrix the factors reproduce.
    pub fn permuted_data(&self) -> &DMatrix<f64> {
        &self.permuted
    }

    /// Permuted position of an original state index.
    pub fn state_position(&self, w: usize) -> usize {
        self.inv_row[w]
    }

    /// Permuted position of an original measurement column index.
    pub fn meas_position(&self, n: usize) -> usize {
        self.inv_col[n]
    }
}

/// The D^2 x J matrix whose columns are vectorized symmetric matrices N_j;
/// its rank against D(D+1)/2 decides global completability.
#[derive(Debug, Clone)]
pub struct CriterionMatrix {
    pub entries: DMatrix<f64>,
    pub block: Side,
    pub num_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalVerdict {
    pub completable: bool,
    pub rank_report: RankReport,
    /// `D(D+1)/2`.
    pub target: usize,
    pub block: Side,
}

/// Factors a data matrix of rank D into `(P0_st)^T P0_m` by truncated SVD,
/// after permuting rows and columns (complete pivoting) so the leading
/// D x D corner is invertible.
pub fn factor_data(data: &DataMatrix, ambient_dim: usize) -> Result<Factorization> {
    let d = ambient_dim;
    let (w, vk) = data.entries.shape();
    if d == 0 {
        return Err(Error::invalid("ambient dimension D must be positive"));
    }
    if w < d || vk < d {
        return Err(Error::DataRankDeficient {
            rank: w.min(vk),
            ambient_dim: d,
        });
    }
    let rank = svd_rank(&data.entries, DEFAULT_REL_TOL)?.computed_rank;
    if rank < d {
        return Err(Error::DataRankDeficient {
            rank,
            ambient_dim: d,
        });
    }
    if rank > d {
        return Err(Error::invalid(format!(
            "data matrix has rank {rank} > D={d}: not consistent with a {d}-dimensional configuration"
        )));
    }
    let (row_perm, col_perm) = pivot_permutations(&data.entries, d)?;
    let inv_row = invert_perm(&row_perm);
    let inv_col = invert_perm(&col_perm);
    let permuted = DMatrix::from_fn(w, vk, |r, c| data.entries[(row_perm[r], col_perm[c])]);
    let svd = nalgebra::SVD::try_new(permuted.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed { rows: w, cols: vk })?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let p0_st = u.columns(0, d).transpose();
    let mut p0_m = v_t.rows(0, d).into_owned();
    for i in 0..d {
        let s = svd.singular_values[i];
        p0_m.row_mut(i).scale_mut(s);
    }
    let corner = permuted.view((0, 0), (d, d)).into_owned();
    let corner_sv = crate::rank::singular_values_desc(&corner)?;
    Ok(Factorization {
        p0_st,
        p0_m,
        row_perm,
        col_perm,
        corner_conditioning: corner_sv.last().copied().unwrap_or(0.0),
        ambient_dim: d,
        permuted,
        inv_row,
        inv_col,
    })
}

/// Complete-pivot Gaussian elimination, tracking the first `d` pivot rows
/// and columns. Returns full row/column permutations with the pivots first.
fn pivot_permutations(a: &DMatrix<f64>, d: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (rows, cols) = a.shape();
    let mut work = a.clone();
    let mut free_rows: Vec<usize> = (0..rows).collect();
    let mut free_cols: Vec<usize> = (0..cols).collect();
    let mut pivot_rows = Vec::with_capacity(d);
    let mut pivot_cols = Vec::with_capacity(d);
    let scale = a.amax();
    for _ in 0..d {
        let mut best = (0usize, 0usize, -1.0f64);
        for (ri, &r) in free_rows.iter().enumerate() {
            for (ci, &c) in free_cols.iter().enumerate() {
                let mag = work[(r, c)].abs();
                if mag > best.2 {
                    best = (ri, ci, mag);
                }
            }
        }
        if best.2 <= scale * 1e-12 {
            return Err(Error::DataRankDeficient {
                rank: pivot_rows.len(),
                ambient_dim: d,
            });
        }
        let pr = free_rows.remove(best.0);
        let pc = free_cols.remove(best.1);
        let pivot = work[(pr, pc)];
        for &r in &free_rows {
            let factor = work[(r, pc)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for &c in &free_cols {
                let update = factor * work[(pr, c)];
                work[(r, c)] -= update;
            }
        }
        pivot_rows.push(pr);
        pivot_cols.push(pc);
    }
    free_rows.sort_unstable();
    free_cols.sort_unstable();
    pivot_rows.extend(free_rows);
    pivot_cols.extend(free_cols);
    Ok((pivot_rows, pivot_cols))
}

fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (pos, &orig) in perm.iter().enumerate() {
        inv[orig] = pos;
    }
    inv
}

/// Determines which side the mask's knowledge lives on; exactly one of the
/// state/measurement pair sets must be non-empty.
pub fn knowledge_side(mask: &OmegaMask) -> Result<Side> {
    match (mask.num_st_pairs() > 0, mask.num_m_pairs() > 0) {
        (true, false) => Ok(Side::States),
        (false, true) => Ok(Side::Measurements),
        (true, true) => Err(Error::MixedSideKnowledge),
        (false, false) => Err(Error::EmptySideKnowledge),
    }
}

/// Builds the criterion matrix directly from permuted data entries.
///
/// For a state pair (w1, w2), N_j is the symmetrized outer product of data
/// rows w1 and w2 restricted to the first D (permuted) columns; for a
/// measurement pair, of data columns restricted to the first D rows. Columns
/// are vectorized by column stacking, in the mask's canonical pair order.
pub fn build_criterion(fact: &Factorization, mask: &OmegaMask) -> Result<CriterionMatrix> {
    let side = knowledge_side(mask)?;
    if !mask.includes_data_block() {
        return Err(Error::DataBlockMissing);
    }
    let d = fact.ambient_dim;
    let data = fact.permuted_data();
    let mut entries = DMatrix::zeros(d * d, mask.num_st_pairs() + mask.num_m_pairs());
    match side {
        Side::States => {
            for (j, (w1, w2)) in mask.st_pairs().enumerate() {
                let r1 = fact.state_position(w1);
                let r2 = fact.state_position(w2);
                for y in 0..d {
                    for x in 0..d {
                        let n_xy =
                            0.5 * (data[(r1, x)] * data[(r2, y)] + data[(r2, x)] * data[(r1, y)]);
                        entries[(y * d + x, j)] = n_xy;
                    }
                }
            }
        }
        Side::Measurements => {
            for (j, (n1, n2)) in mask.m_pairs().enumerate() {
                let c1 = fact.meas_position(n1);
                let c2 = fact.meas_position(n2);
                for y in 0..d {
                    for x in 0..d {
                        let n_xy =
                            0.5 * (data[(x, c1)] * data[(y, c2)] + data[(x, c2)] * data[(y, c1)]);
                        entries[(y * d + x, j)] = n_xy;
                    }
                }
            }
        }
    }
    Ok(CriterionMatrix {
        num_pairs: entries.ncols(),
        entries,
        block: side,
    })
}

/// Exact-integer criterion matrix, scaled by 2 to stay integral; the scaling
/// leaves every rank unchanged. Returns the matrix and the prime-field
/// pivoting that certified the invertible corner.
pub fn integer_criterion(
    data: &DMatrix<i64>,
    ambient_dim: usize,
    mask: &OmegaMask,
    prime: u64,
) -> Result<(DMatrix<i64>, Side)> {
    let side = knowledge_side(mask)?;
    if !mask.includes_data_block() {
        return Err(Error::DataBlockMissing);
    }
    let d = ambient_dim;
    let (w, vk) = data.shape();
    let flat: Vec<i64> = (0..w)
        .flat_map(|r| (0..vk).map(move |c| data[(r, c)]))
        .collect();
    let (rank, pivot_rows, pivot_cols) = gf::rank_mod_p_with_pivots(&flat, w, vk, prime);
    if rank < d {
        return Err(Error::DataRankDeficient {
            rank,
            ambient_dim: d,
        });
    }
    let corner_rows = &pivot_rows[..d];
    let corner_cols = &pivot_cols[..d];
    let mut entries = DMatrix::zeros(d * d, mask.num_st_pairs() + mask.num_m_pairs());
    match side {
        Side::States => {
            for (j, (w1, w2)) in mask.st_pairs().enumerate() {
                for y in 0..d {
                    for x in 0..d {
                        let cx = corner_cols[x];
                        let cy = corner_cols[y];
                        entries[(y * d + x, j)] =
                            data[(w1, cx)] * data[(w2, cy)] + data[(w2, cx)] * data[(w1, cy)];
                    }
                }
            }
        }
        Side::Measurements => {
            for (j, (n1, n2)) in mask.m_pairs().enumerate() {
                for y in 0..d {
                    for x in 0..d {
                        let rx = corner_rows[x];
                        let ry = corner_rows[y];
                        entries[(y * d + x, j)] =
                            data[(rx, n1)] * data[(ry, n2)] + data[(rx, n2)] * data[(ry, n1)];
                    }
                }
            }
        }
    }
    Ok((entries, side))
}

/// Randomized test for generic global completability.
///
/// Draws random configurations, builds the criterion matrix of each sample's
/// data block, and declares the scenario completable when the maximum
/// observed rank reaches D(D+1)/2; by universality the verdict then holds
/// for almost all configurations.
pub fn global_test(
    shape: ProblemShape,
    mask: &OmegaMask,
    trials: usize,
    backend: TestBackend,
    rel_tol: f64,
    seed: u64,
) -> Result<GlobalVerdict> {
    if *mask.shape() != shape {
        return Err(Error::invalid("mask shape does not match test shape"));
    }
    if shape.num_columns() < shape.ambient_dim {
        return Err(Error::SpanningViolated {
            num_columns: shape.num_columns(),
            ambient_dim: shape.ambient_dim,
        });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let side = knowledge_side(mask)?;
    let d = shape.ambient_dim;
    let target = shape.sym_dim();
    let mut best: Option<RankReport> = None;
    let mut last_error: Option<Error> = None;
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, &[trial as u64]);
        let mut rng = rng_from_seed(trial_seed);
        let mut attempt = || -> Result<RankReport> {
            match backend {
                TestBackend::Svd => {
                    let q = gaussian_configuration(shape, &mut rng);
                    let data = DataMatrix::from_configuration(&q);
                    let fact = factor_data(&data, d)?;
                    let crit = build_criterion(&fact, mask)?;
                    svd_rank(&crit.entries, rel_tol)
                }
                TestBackend::FiniteField => {
                    let (_, ints) = integer_configuration(shape, &mut rng);
                    let data = ints.columns(0, shape.num_states).transpose()
                        * ints.columns(shape.num_states, shape.meas_columns());
                    let prime = gf::prime_from_seed(trial_seed);
                    let (crit, _) = integer_criterion(&data, d, mask, prime)?;
                    Ok(finite_field_rank(&crit, Some(prime)))
                }
                TestBackend::Consensus => {
                    let (_, ints) = integer_configuration(shape, &mut rng);
                    let data = ints.columns(0, shape.num_states).transpose()
                        * ints.columns(shape.num_states, shape.meas_columns());
                    let prime = gf::prime_from_seed(trial_seed);
                    let (crit, _) = integer_criterion(&data, d, mask, prime)?;
                    rank_with_consensus(&crit, rel_tol)
                }
            }
        };
        let report = match attempt() {
            Ok(r) => r,
            Err(e) => {
                // an unlucky degenerate sample only fails this trial; a
                // structural problem fails every trial and surfaces below
                log::debug!("global trial {trial} failed: {e}");
                last_error = Some(e);
                continue;
            }
        };
        log::debug!(
            "global trial {trial}: criterion rank {} (target {target})",
            report.computed_rank
        );
        let better = best
            .as_ref()
            .is_none_or(|b| report.computed_rank > b.computed_rank);
        if better {
            best = Some(report);
        }
        if best.as_ref().is_some_and(|b| b.computed_rank >= target) {
            break;
        }
    }
    let report = match best {
        Some(report) => report.with_target(target),
        None => return Err(last_error.expect("at least one trial ran")),
    };
    Ok(GlobalVerdict {
        completable: report.computed_rank == target,
        target,
        rank_report: report,
        block: side,
    })
}

/// Solves the knowledge constraints `tr(B_j M) = G_j` for the symmetric
/// matrix M: `(A^T A)^{-1}` when the knowledge lives on the state side,
/// `A^T A` on the measurement side.
///
/// Fails when the constraint system is rank-deficient (`M` not unique), the
/// least-squares residual exceeds `1e-8 * ||values||` (knowledge inconsistent
/// with the data), or the solution is not positive definite (no real
/// configuration explains the data).
pub fn recover_symmetric_unknown(
    fact: &Factorization,
    knowledge: &GramKnowledge,
) -> Result<DMatrix<f64>> {
    let side = knowledge_side(&knowledge.mask)?;
    let d = fact.ambient_dim;
    let sym_dim = d * (d + 1) / 2;
    let (pairs, values): (Vec<(usize, usize)>, &[f64]) = match side {
        Side::States => (knowledge.mask.st_pairs().collect(), knowledge.st_values()),
        Side::Measurements => (knowledge.mask.m_pairs().collect(), knowledge.m_values()),
    };
    let j = pairs.len();
    let mut system = DMatrix::zeros(j, sym_dim);
    for (row, &(i1, i2)) in pairs.iter().enumerate() {
        let b = basis_outer(fact, side, i1, i2);
        let mut col = 0;
        for a in 0..d {
            for bidx in a..d {
                // tr(B E_ab) with E_aa = e_a e_a^T and E_ab = e_a e_b^T + e_b e_a^T
                system[(row, col)] = if a == bidx {
                    b[(a, a)]
                } else {
                    2.0 * b[(a, bidx)]
                };
                col += 1;
            }
        }
    }
    let rhs = DVector::from_column_slice(values);
    let rank = svd_rank(&system, DEFAULT_REL_TOL)?.computed_rank;
    if rank < sym_dim {
        return Err(Error::NotUnique {
            rank,
            needed: sym_dim,
        });
    }
    let svd = nalgebra::SVD::try_new(system.clone(), true, true, f64::EPSILON, 0).ok_or(
        Error::SvdFailed {
            rows: j,
            cols: sym_dim,
        },
    )?;
    let sigma_max = svd.singular_values.max();
    let solution = svd
        .solve(&rhs, sigma_max * DEFAULT_REL_TOL)
        .map_err(Error::invalid)?;
    let residual = (&system * &solution - &rhs).norm();
    let allowed = 1e-8 * rhs.norm();
    if residual > allowed {
        return Err(Error::InconsistentKnowledge { residual, allowed });
    }
    let mut m = DMatrix::zeros(d, d);
    let mut col = 0;
    for a in 0..d {
        for b in a..d {
            m[(a, b)] = solution[col];
            m[(b, a)] = solution[col];
            col += 1;
        }
    }
    let eigenvalues = m.symmetric_eigenvalues();
    let (min_eig, max_eig) = (eigenvalues.min(), eigenvalues.max());
    if min_eig <= 1e-10 * max_eig.max(0.0) {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    Ok(m)
}

/// Symmetrized outer product of the P0 columns selected by a knowledge pair:
/// `B = (u v^T + v u^T) / 2` with u, v the factor columns of the pair.
fn basis_outer(fact: &Factorization, side: Side, i1: usize, i2: usize) -> DMatrix<f64> {
    let (factor, p1, p2) = match side {
        Side::States => (
            &fact.p0_st,
            fact.state_position(i1),
            fact.state_position(i2),
        ),
        Side::Measurements => (&fact.p0_m, fact.meas_position(i1), fact.meas_position(i2)),
    };
    let u = factor.column(p1);
    let v = factor.column(p2);
    let d = fact.ambient_dim;
    DMatrix::from_fn(d, d, |x, y| 0.5 * (u[x] * v[y] + v[x] * u[y]))
}

/// Assembles the unique N x N Gram matrix from a factorization and the
/// recovered symmetric matrix, with the pivoting permutations undone. The
/// result is exactly of the form `P^T P`, hence symmetric PSD of rank D.
pub fn reconstruct_gram(
    fact: &Factorization,
    m: &DMatrix<f64>,
    side: Side,
) -> Result<DMatrix<f64>> {
    let d = fact.ambient_dim;
    let chol = Cholesky::new(m.clone()).ok_or_else(|| {
        let min_eig = m.symmetric_eigenvalues().min();
        Error::NotPositiveDefinite { min_eig }
    })?;
    let l = chol.l();
    // With M = L L^T: on the state side G_st = P0^T M P0 and
    // G_m = P0^T M^{-1} P0, realized as P_st = L^T P0_st, P_m = L^{-1} P0_m;
    // the measurement side swaps the roles.
    let (p_st, p_m) = match side {
        Side::States => (
            l.transpose() * &fact.p0_st,
            l.solve_lower_triangular(&fact.p0_m)
                .ok_or_else(|| Error::invalid("Cholesky factor not invertible"))?,
        ),
        Side::Measurements => (
            l.solve_lower_triangular(&fact.p0_st)
                .ok_or_else(|| Error::invalid("Cholesky factor not invertible"))?,
            l.transpose() * &fact.p0_m,
        ),
    };
    let w = p_st.ncols();
    let vk = p_m.ncols();
    let mut full = DMatrix::zeros(d, w + vk);
    for orig in 0..w {
        full.set_column(orig, &p_st.column(fact.state_position(orig)));
    }
    for orig in 0..vk {
        full.set_column(w + orig, &p_m.column(fact.meas_position(orig)));
    }
    Ok(full.transpose() * full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extract_knowledge, scenario_mask, Configuration, Scenario};
    use approx::assert_abs_diff_eq;

    fn random_config(shape: ProblemShape, seed: u64) -> Configuration {
        let mut rng = rng_from_seed(seed);
        gaussian_configuration(shape, &mut rng)
    }

    #[test]
    fn factor_identity_data() {
        let d = DataMatrix {
            entries: DMatrix::identity(3, 3),
        };
        let fact = factor_data(&d, 3).unwrap();
        assert_eq!(fact.row_perm.len(), 3);
        let product = fact.p0_st.transpose() * &fact.p0_m;
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(
                    product[(r, c)],
                    fact.permuted_data()[(r, c)],
                    epsilon = 1e-12
                );
            }
        }
        assert_abs_diff_eq!(fact.corner_conditioning, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn factor_roundtrip_random() {
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let p = random_config(shape, 3);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let product = fact.p0_st.transpose() * &fact.p0_m;
        let diff = (&product - fact.permuted_data()).amax();
        assert!(diff < 1e-10, "factor mismatch {diff}");
        // permutations really permute the original data
        for r in 0..10 {
            for c in 0..8 {
                assert_eq!(
                    fact.permuted_data()[(r, c)],
                    data.entries[(fact.row_perm[r], fact.col_perm[c])]
                );
            }
        }
        // both factors have full rank D
        for factor in [&fact.p0_st, &fact.p0_m] {
            let r = svd_rank(factor, DEFAULT_REL_TOL).unwrap();
            assert_eq!(r.computed_rank, 4);
        }
        assert!(fact.corner_conditioning > 0.0);
    }

    #[test]
    fn factor_rejects_rank_deficient() {
        // rank-3 data requested with D = 4
        let shape = ProblemShape::ambient(3, 5, 3, 2).unwrap();
        let p = random_config(shape, 4);
        let data = DataMatrix::from_configuration(&p);
        assert!(matches!(
            factor_data(&data, 4),
            Err(Error::DataRankDeficient { rank: 3, .. })
        ));
    }

    #[test]
    fn scalar_criterion_is_squared_entry() {
        let shape = ProblemShape::ambient(1, 1, 1, 1).unwrap();
        let c = 0.7;
        let data = DataMatrix {
            entries: DMatrix::from_element(1, 1, c),
        };
        let fact = factor_data(&data, 1).unwrap();
        let mask = OmegaMask::new(shape, [(0, 0)], [], true).unwrap();
        let crit = build_criterion(&fact, &mask).unwrap();
        assert_eq!(crit.entries.shape(), (1, 1));
        assert_abs_diff_eq!(crit.entries[(0, 0)], c * c, epsilon = 1e-14);
    }

    #[test]
    fn criterion_columns_are_symmetric_vectorizations() {
        let shape = ProblemShape::quantum(2, 6, 3, 2).unwrap();
        let p = random_config(shape, 9);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let crit = build_criterion(&fact, &mask).unwrap();
        let d = 4;
        for j in 0..crit.num_pairs {
            for x in 0..d {
                for y in 0..d {
                    assert_eq!(
                        crit.entries[(y * d + x, j)],
                        crit.entries[(x * d + y, j)],
                        "column {j} not a symmetric vectorization"
                    );
                }
            }
        }
    }

    #[test]
    fn diagonal_pair_gives_rank_one_column() {
        let shape = ProblemShape::ambient(2, 3, 2, 2).unwrap();
        let p = random_config(shape, 1);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 2).unwrap();
        let mask = OmegaMask::new(shape, [(1, 1)], [], true).unwrap();
        let crit = build_criterion(&fact, &mask).unwrap();
        let n = DMatrix::from_fn(2, 2, |x, y| crit.entries[(y * 2 + x, 0)]);
        let r = svd_rank(&n, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 1);
        // N = a^T a for the data row restricted to the corner
        let pos = fact.state_position(1);
        let row = fact.permuted_data().row(pos);
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(n[(x, y)], row[x] * row[y], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mixed_side_mask_rejected() {
        let shape = ProblemShape::ambient(2, 3, 2, 2).unwrap();
        let p = random_config(shape, 2);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 2).unwrap();
        let mask = OmegaMask::new(shape, [(0, 0)], [(0, 1)], true).unwrap();
        assert!(matches!(
            build_criterion(&fact, &mask),
            Err(Error::MixedSideKnowledge)
        ));
        let no_data = OmegaMask::new(shape, [(0, 0)], [], false).unwrap();
        assert!(matches!(
            build_criterion(&fact, &no_data),
            Err(Error::DataBlockMissing)
        ));
    }

    #[test]
    fn criterion_rank_bounded_by_sym_dim() {
        let shape = ProblemShape::quantum(2, 14, 4, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let v = global_test(shape, &mask, 2, TestBackend::Svd, DEFAULT_REL_TOL, 5).unwrap();
        assert!(v.rank_report.computed_rank <= shape.sym_dim());
    }

    #[test]
    fn global_table_point_d2_scenario1() {
        // d=2, W=10, V=4, K=2: criterion rank 10 = D(D+1)/2
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let v = global_test(shape, &mask, 3, TestBackend::Svd, DEFAULT_REL_TOL, 7).unwrap();
        assert!(v.completable);
        assert_eq!(v.rank_report.computed_rank, 10);
        assert_eq!(v.block, Side::States);
    }

    #[test]
    fn global_one_state_short_is_flexible() {
        let shape = ProblemShape::quantum(2, 9, 4, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let v = global_test(shape, &mask, 3, TestBackend::Svd, DEFAULT_REL_TOL, 7).unwrap();
        assert!(!v.completable);
        assert_eq!(v.rank_report.computed_rank, 9);
    }

    #[test]
    fn global_backends_agree() {
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        for backend in [
            TestBackend::Svd,
            TestBackend::FiniteField,
            TestBackend::Consensus,
        ] {
            let v = global_test(shape, &mask, 2, backend, DEFAULT_REL_TOL, 11).unwrap();
            assert!(v.completable, "{backend:?}");
        }
    }

    #[test]
    fn verdict_scale_invariant() {
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let p = random_config(shape, 21);
        for scale in [1e-3, 1.0, 1e3] {
            let data = DataMatrix {
                entries: &p.states().transpose() * p.measurements() * scale,
            };
            let fact = factor_data(&data, 4).unwrap();
            let crit = build_criterion(&fact, &mask).unwrap();
            let r = svd_rank(&crit.entries, DEFAULT_REL_TOL).unwrap();
            assert_eq!(r.computed_rank, 10, "scale {scale}");
        }
    }

    #[test]
    fn recover_identity_factorization() {
        // knowledge generated from the factorization itself: M = identity
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let p = random_config(shape, 31);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        // build the "true" configuration formed by the factors themselves
        let mut entries = DMatrix::zeros(4, 18);
        for w in 0..10 {
            entries.set_column(w, &fact.p0_st.column(fact.state_position(w)));
        }
        for n in 0..8 {
            entries.set_column(10 + n, &fact.p0_m.column(fact.meas_position(n)));
        }
        let p0_config = Configuration::new(shape, entries).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let knowledge = extract_knowledge(&p0_config, &mask).unwrap();
        let m = recover_symmetric_unknown(&fact, &knowledge).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(m[(a, b)], expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn recover_reproduces_constraints() {
        let shape = ProblemShape::ambient(2, 6, 2, 2).unwrap();
        let p = random_config(shape, 41);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 2).unwrap();
        let mask = OmegaMask::new(shape, [(0, 0), (1, 1), (0, 1)], [], true).unwrap();
        let knowledge = extract_knowledge(&p, &mask).unwrap();
        let m = recover_symmetric_unknown(&fact, &knowledge).unwrap();
        for (j, (w1, w2)) in mask.st_pairs().enumerate() {
            let b = basis_outer(&fact, Side::States, w1, w2);
            let predicted = (b * &m).trace();
            assert_abs_diff_eq!(predicted, knowledge.st_values()[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn recover_flags_inconsistent_knowledge() {
        // 12 diagonal constraints against 10 symmetric unknowns: perturbing
        // one value leaves the overdetermined system unsolvable
        let shape = ProblemShape::quantum(2, 12, 4, 2).unwrap();
        let p = random_config(shape, 51);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let mut knowledge = extract_knowledge(&p, &mask).unwrap();
        knowledge.values[0] += 1.0;
        assert!(matches!(
            recover_symmetric_unknown(&fact, &knowledge),
            Err(Error::InconsistentKnowledge { .. })
        ));
    }

    #[test]
    fn recover_flags_underdetermined_system() {
        let shape = ProblemShape::quantum(2, 5, 4, 2).unwrap();
        let p = random_config(shape, 61);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let knowledge = extract_knowledge(&p, &mask).unwrap();
        // 5 constraints cannot pin 10 symmetric degrees of freedom
        assert!(matches!(
            recover_symmetric_unknown(&fact, &knowledge),
            Err(Error::NotUnique { .. })
        ));
    }

    #[test]
    fn reconstruct_identity_case() {
        // M = I, data = I_D: the factor Grams tile the result
        let data = DataMatrix {
            entries: DMatrix::identity(2, 2),
        };
        let fact = factor_data(&data, 2).unwrap();
        let g = reconstruct_gram(&fact, &DMatrix::identity(2, 2), Side::States).unwrap();
        assert_eq!(g.shape(), (4, 4));
        let gram_st = fact.p0_st.transpose() * &fact.p0_st;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(g[(i, j)], gram_st[(i, j)], epsilon = 1e-12);
                assert_abs_diff_eq!(g[(i, 2 + j)], data.entries[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn full_pipeline_roundtrip() {
        let shape = ProblemShape::quantum(2, 10, 4, 2).unwrap();
        let p = random_config(shape, 71);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let knowledge = extract_knowledge(&p, &mask).unwrap();
        let m = recover_symmetric_unknown(&fact, &knowledge).unwrap();
        let g = reconstruct_gram(&fact, &m, Side::States).unwrap();
        let truth = p.gram();
        let err = (&g - &truth).amax();
        assert!(err < 1e-7, "roundtrip error {err}");
        // spectral sanity: PSD of rank D
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() > -1e-8);
        let r = svd_rank(&g, DEFAULT_REL_TOL).unwrap();
        assert_eq!(r.computed_rank, 4);
    }

    #[test]
    fn roundtrip_on_measurement_side() {
        let shape = ProblemShape::quantum(2, 4, 10, 2).unwrap();
        let p = random_config(shape, 81);
        let data = DataMatrix::from_configuration(&p);
        let fact = factor_data(&data, 4).unwrap();
        let mask = scenario_mask(shape, &Scenario::ProjKnownDeg).unwrap();
        let knowledge = extract_knowledge(&p, &mask).unwrap();
        let m = recover_symmetric_unknown(&fact, &knowledge).unwrap();
        let g = reconstruct_gram(&fact, &m, Side::Measurements).unwrap();
        let err = (&g - p.gram()).amax();
        assert!(err < 1e-7, "roundtrip error {err}");
    }
}
