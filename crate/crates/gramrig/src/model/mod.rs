//! Data model: problem shapes, vector configurations, measurement data, and
//! the generators that produce generic and quantum-structured instances.

pub mod mask;
pub mod quantum;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mask::{extract_knowledge, scenario_mask, GramKnowledge, OmegaMask, Scenario};
pub use quantum::{born_data, make_hermitian_basis, random_quantum_model, vectorize, QuantumModel};

/// Integer sampling range for the exact rank backend. Jacobian and criterion
/// entries stay exactly representable (they are low-degree polynomials in the
/// configuration entries), so Gaussian elimination over GF(p) applies.
pub const INTEGER_SAMPLE_BOUND: i64 = 10;

/// Dimensions of a state/measurement scenario.
///
/// `W` prepared states and `V` measurements with `K` outcomes each live as
/// columns of a `D x N` configuration, `N = W + V*K`. A quantum-derived shape
/// has `D = d^2` for Hilbert dimension `d`; a free ambient shape leaves the
/// Hilbert dimension unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemShape {
    pub hilbert_dim: Option<usize>,
    pub ambient_dim: usize,
    pub num_states: usize,
    pub num_measurements: usize,
    pub outcomes: usize,
}

impl ProblemShape {
    /// Quantum-derived shape with `D = d^2`.
    pub fn quantum(d: usize, states: usize, measurements: usize, outcomes: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("Hilbert dimension d must be positive"));
        }
        Self::validate(Some(d), d * d, states, measurements, outcomes)
    }

    /// Free ambient shape; `D` need not be a perfect square.
    pub fn ambient(
        ambient_dim: usize,
        states: usize,
        measurements: usize,
        outcomes: usize,
    ) -> Result<Self> {
        Self::validate(None, ambient_dim, states, measurements, outcomes)
    }

    fn validate(
        hilbert_dim: Option<usize>,
        ambient_dim: usize,
        num_states: usize,
        num_measurements: usize,
        outcomes: usize,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::invalid("ambient dimension D must be positive"));
        }
        if outcomes == 0 {
            return Err(Error::invalid("outcome count K must be positive"));
        }
        Ok(ProblemShape {
            hilbert_dim,
            ambient_dim,
            num_states,
            num_measurements,
            outcomes,
        })
    }

    /// Total number of columns, `N = W + V*K`.
    pub fn num_columns(&self) -> usize {
        self.num_states + self.meas_columns()
    }

    /// Number of measurement columns, `V*K`.
    pub fn meas_columns(&self) -> usize {
        self.num_measurements * self.outcomes
    }

    /// Dimension of the trivial orbit O(D), `D(D-1)/2`.
    pub fn orbit_dim(&self) -> usize {
        self.ambient_dim * (self.ambient_dim - 1) / 2
    }

    /// `dim Sym(R^D) = D(D+1)/2`, the global criterion's target rank.
    pub fn sym_dim(&self) -> usize {
        self.ambient_dim * (self.ambient_dim + 1) / 2
    }
}

/// A `D x N` matrix whose columns are the unknown vectors: the first `W`
/// columns describe states, the remaining `V*K` columns measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub shape: ProblemShape,
    pub entries: DMatrix<f64>,
}

impl Configuration {
    pub fn new(shape: ProblemShape, entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != shape.ambient_dim || entries.ncols() != shape.num_columns() {
            return Err(Error::invalid(format!(
                "configuration must be {}x{}, got {}x{}",
                shape.ambient_dim,
                shape.num_columns(),
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Configuration { shape, entries })
    }

    /// State block `P_st` (`D x W`).
    pub fn states(&self) -> DMatrix<f64> {
        self.entries.columns(0, self.shape.num_states).into_owned()
    }

    /// Measurement block `P_m` (`D x VK`).
    pub fn measurements(&self) -> DMatrix<f64> {
        self.entries
            .columns(self.shape.num_states, self.shape.meas_columns())
            .into_owned()
    }

    /// The full Gram matrix `G = P^T P`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.transpose() * &self.entries
    }

    /// Whether the columns span R^D at the given relative tolerance.
    pub fn is_spanning(&self, rel_tol: f64) -> Result<bool> {
        let report = crate::rank::svd_rank(&self.entries, rel_tol)?;
        Ok(report.computed_rank == self.shape.ambient_dim)
    }
}

/// The states-versus-measurements block of the Gram matrix: `W x VK`
/// inner products, experimentally observable as outcome probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub entries: DMatrix<f64>,
}

impl DataMatrix {
    /// `P_st^T P_m` of a configuration.
    pub fn from_configuration(config: &Configuration) -> Self {
        DataMatrix {
            entries: config.states().transpose() * config.measurements(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Generic configuration: entries i.i.d. standard normal.
pub fn gaussian_configuration(shape: ProblemShape, rng: &mut ChaCha8Rng) -> Configuration {
    let entries = DMatrix::from_fn(shape.ambient_dim, shape.num_columns(), |_, _| {
        StandardNormal.sample(rng)
    });
    Configuration { shape, entries }
}

/// Integer configuration for the exact backend: entries uniform in
/// [-INTEGER_SAMPLE_BOUND, INTEGER_SAMPLE_BOUND]. Returns the float view and
/// the exact integer matrix side by side.
pub fn integer_configuration(
    shape: ProblemShape,
    rng: &mut ChaCha8Rng,
) -> (Configuration, DMatrix<i64>) {
    let ints = DMatrix::from_fn(shape.ambient_dim, shape.num_columns(), |_, _| {
        rng.gen_range(-INTEGER_SAMPLE_BOUND..=INTEGER_SAMPLE_BOUND)
    });
    let config = Configuration {
        shape,
        entries: ints.map(|x| x as f64),
    };
    (config, ints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{svd_rank, DEFAULT_REL_TOL};
    use crate::seeding::rng_from_seed;

    #[test]
    fn shape_column_count() {
        let s = ProblemShape::quantum(2, 3, 4, 2).unwrap();
        assert_eq!(s.ambient_dim, 4);
        assert_eq!(s.num_columns(), 3 + 8);
        assert_eq!(s.orbit_dim(), 6);
        assert_eq!(s.sym_dim(), 10);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(ProblemShape::quantum(0, 1, 1, 1).is_err());
        assert!(ProblemShape::ambient(0, 1, 1, 1).is_err());
        assert!(ProblemShape::ambient(3, 1, 1, 0).is_err());
    }

    #[test]
    fn configuration_dimension_check() {
        let s = ProblemShape::ambient(2, 1, 1, 1).unwrap();
        assert!(Configuration::new(s, DMatrix::zeros(2, 3)).is_err());
        assert!(Configuration::new(s, DMatrix::zeros(2, 2)).is_ok());
    }

    #[test]
    fn data_matrix_matches_blocks() {
        let s = ProblemShape::ambient(2, 2, 1, 2).unwrap();
        let mut rng = rng_from_seed(5);
        let p = gaussian_configuration(s, &mut rng);
        let d = DataMatrix::from_configuration(&p);
        let g = p.gram();
        for w in 0..2 {
            for n in 0..2 {
                assert!((d.entries[(w, n)] - g[(w, 2 + n)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn generic_configurations_span() {
        // spanning assumption: rank(P) = D for generic P with N >= D
        let shape = ProblemShape::quantum(2, 3, 2, 2).unwrap();
        for seed in 0..100 {
            let mut rng = rng_from_seed(seed);
            let p = gaussian_configuration(shape, &mut rng);
            let r = svd_rank(&p.entries, DEFAULT_REL_TOL).unwrap();
            assert_eq!(r.computed_rank, 4, "seed {seed}");
            assert!(p.is_spanning(DEFAULT_REL_TOL).unwrap());
        }
    }

    #[test]
    fn deficient_configuration_is_not_spanning() {
        let shape = ProblemShape::ambient(3, 2, 1, 2).unwrap();
        let mut entries = DMatrix::zeros(3, 4);
        entries[(0, 0)] = 1.0;
        entries[(1, 1)] = 1.0; // third row stays zero
        let p = Configuration::new(shape, entries).unwrap();
        assert!(!p.is_spanning(DEFAULT_REL_TOL).unwrap());
    }

    #[test]
    fn integer_configuration_within_bounds() {
        let shape = ProblemShape::ambient(3, 2, 2, 2).unwrap();
        let mut rng = rng_from_seed(8);
        let (config, ints) = integer_configuration(shape, &mut rng);
        for c in 0..ints.ncols() {
            for r in 0..ints.nrows() {
                assert!(ints[(r, c)].abs() <= INTEGER_SAMPLE_BOUND);
                assert_eq!(config.entries[(r, c)], ints[(r, c)] as f64);
            }
        }
    }
}
