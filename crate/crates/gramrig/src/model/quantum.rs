//! Quantum-structured instances: density matrices, POVMs, and their
//! vectorization into real configurations.
//!
//! States and measurement operators live in Herm(C^d), a real vector space of
//! dimension d^2 under the trace inner product. Vectorizing against an
//! orthonormal Hermitian basis turns Born-rule probabilities into plain inner
//! products: tr(rho E) = vec(rho) . vec(E).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Configuration, DataMatrix, ProblemShape};
use crate::seeding::rng_from_seed;

pub type CMatrix = DMatrix<Complex64>;

const HERMITICITY_TOL: f64 = 1e-10;

/// Orthonormal basis of Herm(C^d): the normalized identity followed by the
/// generalized Gell-Mann matrices (symmetric, antisymmetric, diagonal), all
/// scaled to unit Hilbert-Schmidt norm. For d = 2 this is {I, X, Y, Z}/sqrt(2).
pub fn make_hermitian_basis(d: usize) -> Vec<CMatrix> {
    assert!(d >= 1, "Hilbert dimension must be positive");
    let mut basis = Vec::with_capacity(d * d);
    let inv_sqrt_d = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    basis.push(CMatrix::identity(d, d) * inv_sqrt_d);
    let s = 1.0 / 2f64.sqrt();
    for a in 0..d {
        for b in a + 1..d {
            let mut sym = CMatrix::zeros(d, d);
            sym[(a, b)] = Complex64::new(s, 0.0);
            sym[(b, a)] = Complex64::new(s, 0.0);
            basis.push(sym);
        }
    }
    for a in 0..d {
        for b in a + 1..d {
            let mut anti = CMatrix::zeros(d, d);
            anti[(a, b)] = Complex64::new(0.0, -s);
            anti[(b, a)] = Complex64::new(0.0, s);
            basis.push(anti);
        }
    }
    for l in 1..d {
        let coeff = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = CMatrix::zeros(d, d);
        for m in 0..l {
            diag[(m, m)] = Complex64::new(coeff, 0.0);
        }
        diag[(l, l)] = Complex64::new(-(l as f64) * coeff, 0.0);
        basis.push(diag);
    }
    basis
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Coefficients of a Hermitian matrix in the given orthonormal basis:
/// component `a` equals `tr(basis[a] * H)`. Rejects inputs whose coefficients
/// come out with an imaginary part above 1e-10.
pub fn vectorize(h: &CMatrix, basis: &[CMatrix]) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(basis.len());
    for (a, sigma) in basis.iter().enumerate() {
        let c = trace_product(sigma, h);
        if c.im.abs() > HERMITICITY_TOL {
            return Err(Error::NonHermitian(c.im.abs()));
        }
        out[a] = c.re;
    }
    Ok(out)
}

/// States, measurements, and the reference basis of one quantum experiment.
#[derive(Debug, Clone)]
pub struct QuantumModel {
    pub hilbert_dim: usize,
    pub states: Vec<CMatrix>,
    pub povms: Vec<Vec<CMatrix>>,
    pub basis: Vec<CMatrix>,
}

impl QuantumModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.povms.len()
    }

    pub fn outcomes(&self) -> usize {
        self.povms.first().map_or(1, Vec::len)
    }

    pub fn shape(&self) -> Result<ProblemShape> {
        ProblemShape::quantum(
            self.hilbert_dim,
            self.num_states(),
            self.num_measurements(),
            self.outcomes(),
        )
    }

    /// Vectorizes all states and measurement operators into a configuration:
    /// column w is vec(rho_w), column W + (v*K + k) is vec(E_vk).
    pub fn to_configuration(&self) -> Result<Configuration> {
        let shape = self.shape()?;
        let d2 = self.hilbert_dim * self.hilbert_dim;
        let mut entries = DMatrix::zeros(d2, shape.num_columns());
        for (w, rho) in self.states.iter().enumerate() {
            entries.set_column(w, &vectorize(rho, &self.basis)?);
        }
        let w0 = self.num_states();
        for (v, povm) in self.povms.iter().enumerate() {
            for (k, e) in povm.iter().enumerate() {
                entries.set_column(w0 + v * self.outcomes() + k, &vectorize(e, &self.basis)?);
            }
        }
        Configuration::new(shape, entries)
    }
}

/// Samples a random quantum model, reproducibly from the seed.
///
/// States are full-rank Ginibre density matrices. Measurements are either
/// generic POVMs (random positive elements symmetrized to sum to identity)
/// or, with `projective`, exact projective measurements whose projector ranks
/// follow `degeneracies` (default: d split into K near-equal parts).
pub fn random_quantum_model(
    d: usize,
    num_states: usize,
    num_measurements: usize,
    outcomes: usize,
    degeneracies: Option<&[usize]>,
    projective: bool,
    seed: u64,
) -> Result<QuantumModel> {
    if d == 0 {
        return Err(Error::invalid("Hilbert dimension d must be positive"));
    }
    if outcomes == 0 {
        return Err(Error::invalid("outcome count K must be positive"));
    }
    if degeneracies.is_some() && !projective {
        return Err(Error::invalid(
            "degeneracies only apply to projective measurements",
        ));
    }
    let degs = if projective {
        Some(resolve_degeneracies(d, outcomes, degeneracies)?)
    } else {
        None
    };
    let mut rng = rng_from_seed(seed);
    let states = (0..num_states)
        .map(|_| ginibre_state(d, &mut rng))
        .collect();
    let mut povms = Vec::with_capacity(num_measurements);
    for _ in 0..num_measurements {
        let povm = match &degs {
            Some(parts) => projective_povm(d, parts, &mut rng),
            None => generic_povm(d, outcomes, &mut rng)?,
        };
        povms.push(povm);
    }
    Ok(QuantumModel {
        hilbert_dim: d,
        states,
        povms,
        basis: make_hermitian_basis(d),
    })
}

fn resolve_degeneracies(d: usize, outcomes: usize, given: Option<&[usize]>) -> Result<Vec<usize>> {
    let parts = match given {
        Some(parts) => parts.to_vec(),
        None => {
            if outcomes > d {
                return Err(Error::BadDegeneracies {
                    degeneracies: Vec::new(),
                    outcomes,
                    hilbert_dim: d,
                });
            }
            let base = d / outcomes;
            let extra = d % outcomes;
            (0..outcomes)
                .map(|k| base + usize::from(k < extra))
                .collect()
        }
    };
    if parts.len() != outcomes || parts.iter().sum::<usize>() != d || parts.contains(&0) {
        return Err(Error::BadDegeneracies {
            degeneracies: parts,
            outcomes,
            hilbert_dim: d,
        });
    }
    Ok(parts)
}

fn complex_gaussian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

/// Ginibre density matrix: G G* normalized to unit trace; full rank almost surely.
fn ginibre_state(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let g = complex_gaussian(d, rng);
    let pos = &g * g.adjoint();
    let trace: f64 = (0..d).map(|i| pos[(i, i)].re).sum();
    pos / Complex64::new(trace, 0.0)
}

/// Generic POVM: random positive elements A_k, renormalized by conjugation
/// with S^{-1/2} where S is their sum, so the elements sum to the identity.
fn generic_povm(d: usize, outcomes: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CMatrix>> {
    let raw: Vec<CMatrix> = (0..outcomes)
        .map(|_| {
            let g = complex_gaussian(d, rng);
            &g * g.adjoint()
        })
        .collect();
    let mut sum = CMatrix::zeros(d, d);
    for a in &raw {
        sum += a;
    }
    let inv_sqrt = hermitian_inverse_sqrt(&sum)?;
    Ok(raw.iter().map(|a| &inv_sqrt * a * &inv_sqrt).collect())
}

fn hermitian_inverse_sqrt(s: &CMatrix) -> Result<CMatrix> {
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::invalid(format!(
            "positive-element sum not invertible (min eigenvalue {min:.3e})"
        )));
    }
    let d = s.nrows();
    let scaled = CMatrix::from_fn(d, d, |i, j| {
        eig.eigenvectors[(i, j)] * Complex64::new(1.0 / eig.eigenvalues[j].sqrt(), 0.0)
    });
    Ok(&scaled * eig.eigenvectors.adjoint())
}

/// Projective measurement: partition the columns of a Haar unitary by the
/// degeneracy list; element k is the projector onto its column group.
fn projective_povm(d: usize, degeneracies: &[usize], rng: &mut ChaCha8Rng) -> Vec<CMatrix> {
    let u = haar_unitary(d, rng);
    let mut povm = Vec::with_capacity(degeneracies.len());
    let mut col = 0;
    for &deg in degeneracies {
        let mut proj = CMatrix::zeros(d, d);
        for c in col..col + deg {
            let v = u.column(c);
            proj += v * v.adjoint();
        }
        povm.push(proj);
        col += deg;
    }
    povm
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of the R diagonal folded into Q.
pub(crate) fn haar_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let z = complex_gaussian(d, rng);
    let qr = z.qr();
    let r = qr.r();
    let q = qr.q();
    let phases: Vec<Complex64> = (0..d)
        .map(|i| {
            let rii = r[(i, i)];
            if rii.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                rii / rii.norm()
            }
        })
        .collect();
    CMatrix::from_fn(d, d, |i, j| q[(i, j)] * phases[j])
}

/// Born-rule data: entry (w, (v*K)+k) is tr(rho_w E_vk).
pub fn born_data(model: &QuantumModel) -> Result<DataMatrix> {
    let w = model.num_states();
    let k = model.outcomes();
    let vk = model.num_measurements() * k;
    let mut entries = DMatrix::zeros(w, vk);
    for (wi, rho) in model.states.iter().enumerate() {
        for (v, povm) in model.povms.iter().enumerate() {
            for (ki, e) in povm.iter().enumerate() {
                let p = trace_product(rho, e);
                if p.im.abs() > HERMITICITY_TOL {
                    return Err(Error::NonHermitian(p.im.abs()));
                }
                entries[(wi, v * k + ki)] = p.re;
            }
        }
    }
    Ok(DataMatrix { entries })
}
