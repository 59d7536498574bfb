//! Independent brute-force verifiers for the randomized rank tests: a
//! finite-difference Jacobian, a duplicate criterion construction built from
//! explicit factors, a direct null-space uniqueness probe, and a constrained
//! perturbation search that hunts for deformations the local test claims do
//! or do not exist.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{knowledge_side, CriterionMatrix, Factorization, Side};
use crate::model::{extract_knowledge, Configuration, GramKnowledge, OmegaMask};
use crate::rank::{svd_rank, DEFAULT_REL_TOL};
use crate::seeding::{derive_seed, rng_from_seed};

/// Outcome of a constrained perturbation search around a configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub found_nontrivial_deformation: bool,
    /// Frobenius distance of the reported point from the start configuration.
    pub deformation_norm: f64,
    /// Residual norm of the Omega constraints at the reported point.
    pub constraint_violation: f64,
    /// Distance from the trivial orbit O(D)*P after optimal alignment.
    pub orbit_distance: f64,
}

/// A converged point counts as a deformation only below this violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-8;
/// ... and only beyond this distance from the trivial orbit.
pub const ORBIT_DISTANCE_THRESHOLD: f64 = 1e-4;

const MAX_DESCENT_ITERS: usize = 10_000;

/// Central finite differences of the masked Gram map, one column per
/// configuration coordinate in the same column-major layout as the analytic
/// Jacobian.
pub fn fd_jacobian(config: &Configuration, mask: &OmegaMask, step: f64) -> Result<DMatrix<f64>> {
    assert!(step > 0.0, "step must be positive");
    if *mask.shape() != config.shape {
        return Err(Error::invalid("mask shape does not match configuration"));
    }
    let d = config.shape.ambient_dim;
    let n = config.shape.num_columns();
    let rows = mask.len();
    let mut jac = DMatrix::zeros(rows, d * n);
    let mut work = config.clone();
    for col in 0..n {
        for a in 0..d {
            let original = work.entries[(a, col)];
            work.entries[(a, col)] = original + step;
            let plus = extract_knowledge(&work, mask)?.values;
            work.entries[(a, col)] = original - step;
            let minus = extract_knowledge(&work, mask)?.values;
            work.entries[(a, col)] = original;
            let deriv = (plus - minus) / (2.0 * step);
            jac.set_column(col * d + a, &deriv);
        }
    }
    Ok(jac)
}

/// Criterion matrix rebuilt from the explicit factors: the symmetrized outer
/// products B_j of the knowledge side's factor columns, conjugated by the
/// opposite side's corner. Agrees with [`crate::global::build_criterion`]
/// entry for entry in exact arithmetic, through a different computation.
pub fn criterion_from_factors(fact: &Factorization, mask: &OmegaMask) -> Result<CriterionMatrix> {
    let side = knowledge_side(mask)?;
    if !mask.includes_data_block() {
        return Err(Error::DataBlockMissing);
    }
    let d = fact.ambient_dim;
    let corner = match side {
        Side::States => fact.p0_m.columns(0, d).into_owned(),
        Side::Measurements => fact.p0_st.columns(0, d).into_owned(),
    };
    let pairs: Vec<(usize, usize)> = match side {
        Side::States => mask.st_pairs().collect(),
        Side::Measurements => mask.m_pairs().collect(),
    };
    let mut entries = DMatrix::zeros(d * d, pairs.len());
    for (j, &(i1, i2)) in pairs.iter().enumerate() {
        let (p1, p2) = match side {
            Side::States => (fact.state_position(i1), fact.state_position(i2)),
            Side::Measurements => (fact.meas_position(i1), fact.meas_position(i2)),
        };
        let factor = match side {
            Side::States => &fact.p0_st,
            Side::Measurements => &fact.p0_m,
        };
        let u = factor.column(p1);
        let v = factor.column(p2);
        let b = DMatrix::from_fn(d, d, |x, y| 0.5 * (u[x] * v[y] + v[x] * u[y]));
        let conjugated = corner.transpose() * b * &corner;
        for y in 0..d {
            for x in 0..d {
                entries[(y * d + x, j)] = conjugated[(x, y)];
            }
        }
    }
    Ok(CriterionMatrix {
        num_pairs: entries.ncols(),
        entries,
        block: side,
    })
}

/// Decides uniqueness of the symmetric unknown directly: the constraints
/// `tr(B_j M) = c_j` pin M exactly when the B_j span Sym(R^D), i.e. when the
/// constraint operator on the D(D+1)/2-dimensional parameterization has a
/// trivial null space.
pub fn linear_uniqueness_oracle(fact: &Factorization, mask: &OmegaMask) -> Result<bool> {
    let side = knowledge_side(mask)?;
    let d = fact.ambient_dim;
    let sym_dim = d * (d + 1) / 2;
    let pairs: Vec<(usize, usize)> = match side {
        Side::States => mask.st_pairs().collect(),
        Side::Measurements => mask.m_pairs().collect(),
    };
    if pairs.is_empty() {
        return Ok(sym_dim == 0);
    }
    let factor = match side {
        Side::States => &fact.p0_st,
        Side::Measurements => &fact.p0_m,
    };
    let mut system = DMatrix::zeros(pairs.len(), sym_dim);
    for (row, &(i1, i2)) in pairs.iter().enumerate() {
        let (p1, p2) = match side {
            Side::States => (fact.state_position(i1), fact.state_position(i2)),
            Side::Measurements => (fact.meas_position(i1), fact.meas_position(i2)),
        };
        let u = factor.column(p1);
        let v = factor.column(p2);
        let mut col = 0;
        for a in 0..d {
            for b in a..d {
                let entry = 0.5 * (u[a] * v[b] + v[a] * u[b]);
                system[(row, col)] = if a == b { entry } else { 2.0 * entry };
                col += 1;
            }
        }
    }
    let rank = svd_rank(&system, DEFAULT_REL_TOL)?.computed_rank;
    Ok(rank == sym_dim)
}

/// Distance of configuration `q` from the trivial orbit `O(D) * p`,
/// minimized over orthogonal alignments (Procrustes; closed form from the
/// SVD of `p q^T`).
pub fn orbit_distance(q: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    assert_eq!(q.shape(), p.shape(), "configurations must share a shape");
    let cross = p * q.transpose();
    let (rows, cols) = cross.shape();
    let svd = nalgebra::SVD::try_new(cross, true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed { rows, cols })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let optimal = v_t.transpose() * u.transpose();
    Ok((q - optimal * p).norm())
}

/// Searches for a configuration near `P` that satisfies the knowledge
/// constraints yet sits off the trivial orbit: projected gradient descent on
/// the squared constraint violation from randomly perturbed starts, within a
/// ball of radius `0.5 * ||P||`. Finding one refutes local completability;
/// finding none corroborates it (this direction proves nothing).
pub fn perturbation_search(
    config: &Configuration,
    knowledge: &GramKnowledge,
    restarts: usize,
    seed: u64,
) -> Result<PerturbationResult> {
    if *knowledge.mask.shape() != config.shape {
        return Err(Error::invalid(
            "knowledge shape does not match configuration",
        ));
    }
    let pairs = knowledge.mask.global_pairs();
    let targets = &knowledge.values;
    let p_norm = config.entries.norm();
    let radius = 0.5 * p_norm.max(1e-12);
    let mut best: Option<PerturbationResult> = None;
    for restart in 0..restarts {
        let mut rng = rng_from_seed(derive_seed(seed, &[restart as u64]));
        // perturbation sizes sweep the ball from gentle to aggressive
        let frac = 0.05 + 0.35 * (restart as f64 / restarts.max(2) as f64);
        let mut delta = DMatrix::from_fn(config.entries.nrows(), config.entries.ncols(), |_, _| {
            StandardNormal.sample(&mut rng)
        });
        let dn = delta.norm();
        if dn > 0.0 {
            delta.scale_mut(frac * p_norm / dn);
        }
        let start = &config.entries + delta;
        let q = descend(start, &config.entries, radius, &pairs, targets);
        let violation = violation_norm(&q, &pairs, targets);
        let dist = orbit_distance(&q, &config.entries)?;
        let candidate = PerturbationResult {
            found_nontrivial_deformation: violation <= VIOLATION_THRESHOLD
                && dist > ORBIT_DISTANCE_THRESHOLD,
            deformation_norm: (&q - &config.entries).norm(),
            constraint_violation: violation,
            orbit_distance: dist,
        };
        if candidate.found_nontrivial_deformation {
            return Ok(candidate);
        }
        let keep = match &best {
            None => true,
            Some(b) => candidate.constraint_violation < b.constraint_violation,
        };
        if keep {
            best = Some(candidate);
        }
    }
    Ok(best.unwrap_or(PerturbationResult {
        found_nontrivial_deformation: false,
        deformation_norm: 0.0,
        constraint_violation: 0.0,
        orbit_distance: 0.0,
    }))
}

fn violation_sq(q: &DMatrix<f64>, pairs: &[(usize, usize)], targets: &DVector<f64>) -> f64 {
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let r = q.column(i).dot(&q.column(j)) - targets[k];
            r * r
        })
        .sum()
}

fn violation_norm(q: &DMatrix<f64>, pairs: &[(usize, usize)], targets: &DVector<f64>) -> f64 {
    violation_sq(q, pairs, targets).sqrt()
}

fn gradient(q: &DMatrix<f64>, pairs: &[(usize, usize)], targets: &DVector<f64>) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(q.nrows(), q.ncols());
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let r = q.column(i).dot(&q.column(j)) - targets[k];
        if i == j {
            let update = 4.0 * r * q.column(i);
            grad.column_mut(i).zip_apply(&update, |g, u| *g += u);
        } else {
            let ui = 2.0 * r * q.column(j);
            grad.column_mut(i).zip_apply(&ui, |g, u| *g += u);
            let uj = 2.0 * r * q.column(i);
            grad.column_mut(j).zip_apply(&uj, |g, u| *g += u);
        }
    }
    grad
}

fn project_ball(q: DMatrix<f64>, center: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let offset = &q - center;
    let norm = offset.norm();
    if norm <= radius {
        q
    } else {
        center + offset * (radius / norm)
    }
}

/// Gradient descent with Armijo backtracking, projected into the search ball.
fn descend(
    start: DMatrix<f64>,
    center: &DMatrix<f64>,
    radius: f64,
    pairs: &[(usize, usize)],
    targets: &DVector<f64>,
) -> DMatrix<f64> {
    let mut q = project_ball(start, center, radius);
    let mut f = violation_sq(&q, pairs, targets);
    let mut step = 1e-2;
    for _ in 0..MAX_DESCENT_ITERS {
        if f <= 1e-20 {
            break;
        }
        let grad = gradient(&q, pairs, targets);
        let gnorm_sq = grad.norm_squared();
        if gnorm_sq < 1e-30 {
            break;
        }
        let mut t = step;
        let mut accepted = false;
        while t > 1e-18 {
            let candidate = project_ball(&q - t * &grad, center, radius);
            let fc = violation_sq(&candidate, pairs, targets);
            if fc <= f - 1e-4 * t * gnorm_sq {
                q = candidate;
                f = fc;
                step = (t * 2.0).min(1.0);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // stalled: no descent direction at this scale
        }
    }
    q
}
