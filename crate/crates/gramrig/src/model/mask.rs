//! Knowledge masks: which Gram entries are fixed a priori.
//!
//! A mask holds index pairs into the state block and the measurement block of
//! the Gram matrix, plus a flag for whether the whole data block (states
//! versus measurements) is known. Pairs are canonical: `(i, j)` with
//! `i <= j`, deduplicated, iterated in row-major order. The canonical
//! enumeration of all known entries is state pairs, then measurement pairs,
//! then the data block in row-major order; knowledge vectors and file
//! formats align with that enumeration.

use std::collections::BTreeSet;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Configuration, ProblemShape};

/// A priori knowledge patterns from self-consistent tomography.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Approximately pure states: the diagonal of the state Gram block.
    PureStates,
    /// Approximately projective measurements with known degeneracies: full
    /// d x d diagonal blocks of the measurement Gram block.
    ProjKnownDeg,
    /// Approximately projective measurements with unknown degeneracies: the
    /// same blocks without their diagonals.
    ProjUnknownDeg,
    /// Explicit pairs, 0-based within each block.
    Custom {
        st_pairs: Vec<(usize, usize)>,
        m_pairs: Vec<(usize, usize)>,
        data_block: bool,
    },
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::PureStates => "pure",
            Scenario::ProjKnownDeg => "proj-known",
            Scenario::ProjUnknownDeg => "proj-unknown",
            Scenario::Custom { .. } => "custom",
        }
    }
}

/// Canonical set of known Gram entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmegaMask {
    shape: ProblemShape,
    st_pairs: BTreeSet<(usize, usize)>,
    m_pairs: BTreeSet<(usize, usize)>,
    include_data_block: bool,
}

impl OmegaMask {
    /// Builds a mask from raw pairs, canonicalizing (sorting within each
    /// pair, deduplicating) and bounds-checking.
    pub fn new(
        shape: ProblemShape,
        st_pairs: impl IntoIterator<Item = (usize, usize)>,
        m_pairs: impl IntoIterator<Item = (usize, usize)>,
        include_data_block: bool,
    ) -> Result<Self> {
        let mut st = BTreeSet::new();
        for (i, j) in st_pairs {
            let (a, b) = canonical(i, j);
            if b >= shape.num_states {
                return Err(Error::invalid(format!(
                    "state pair ({i},{j}) out of bounds for W={}",
                    shape.num_states
                )));
            }
            st.insert((a, b));
        }
        let mut m = BTreeSet::new();
        for (i, j) in m_pairs {
            let (a, b) = canonical(i, j);
            if b >= shape.meas_columns() {
                return Err(Error::invalid(format!(
                    "measurement pair ({i},{j}) out of bounds for VK={}",
                    shape.meas_columns()
                )));
            }
            m.insert((a, b));
        }
        Ok(OmegaMask {
            shape,
            st_pairs: st,
            m_pairs: m,
            include_data_block,
        })
    }

    /// Mask with every Gram entry known.
    pub fn full(shape: ProblemShape) -> Self {
        let st = pairs_upto(shape.num_states);
        let m = pairs_upto(shape.meas_columns());
        OmegaMask {
            shape,
            st_pairs: st,
            m_pairs: m,
            include_data_block: true,
        }
    }

    /// Mask with no entry known.
    pub fn empty(shape: ProblemShape) -> Self {
        OmegaMask {
            shape,
            st_pairs: BTreeSet::new(),
            m_pairs: BTreeSet::new(),
            include_data_block: false,
        }
    }

    pub fn shape(&self) -> &ProblemShape {
        &self.shape
    }

    pub fn st_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.st_pairs.iter().copied()
    }

    pub fn m_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.m_pairs.iter().copied()
    }

    pub fn num_st_pairs(&self) -> usize {
        self.st_pairs.len()
    }

    pub fn num_m_pairs(&self) -> usize {
        self.m_pairs.len()
    }

    pub fn includes_data_block(&self) -> bool {
        self.include_data_block
    }

    /// |Omega|: block pairs plus, when the data block is known, W*V*K.
    pub fn len(&self) -> usize {
        let data = if self.include_data_block {
            self.shape.num_states * self.shape.meas_columns()
        } else {
            0
        };
        self.st_pairs.len() + self.m_pairs.len() + data
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical enumeration as global column-index pairs into the full
    /// `N x N` Gram matrix: state pairs, then measurement pairs (offset by
    /// `W`), then the data block row-major.
    pub fn global_pairs(&self) -> Vec<(usize, usize)> {
        let w = self.shape.num_states;
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.st_pairs.iter().copied());
        out.extend(self.m_pairs.iter().map(|&(i, j)| (w + i, w + j)));
        if self.include_data_block {
            for s in 0..w {
                for n in 0..self.shape.meas_columns() {
                    out.push((s, w + n));
                }
            }
        }
        out
    }

    /// Union of two masks over the same shape.
    pub fn union(&self, other: &OmegaMask) -> Result<OmegaMask> {
        if self.shape != other.shape {
            return Err(Error::invalid("mask union requires identical shapes"));
        }
        Ok(OmegaMask {
            shape: self.shape,
            st_pairs: self.st_pairs.union(&other.st_pairs).copied().collect(),
            m_pairs: self.m_pairs.union(&other.m_pairs).copied().collect(),
            include_data_block: self.include_data_block || other.include_data_block,
        })
    }
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

fn pairs_upto(n: usize) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i..n {
            out.insert((i, j));
        }
    }
    out
}

/// Builds the mask for a named knowledge scenario. The data block is always
/// included: it is the experimentally observable part of the Gram matrix.
pub fn scenario_mask(shape: ProblemShape, scenario: &Scenario) -> Result<OmegaMask> {
    match scenario {
        Scenario::PureStates => {
            let st = (0..shape.num_states).map(|w| (w, w));
            OmegaMask::new(shape, st, std::iter::empty(), true)
        }
        Scenario::ProjKnownDeg | Scenario::ProjUnknownDeg => {
            let d = block_dim(shape, scenario)?;
            let mut m = Vec::new();
            for v in 0..shape.num_measurements {
                let base = v * shape.outcomes;
                for a in 0..d {
                    let start_b = if matches!(scenario, Scenario::ProjKnownDeg) {
                        a
                    } else {
                        a + 1
                    };
                    for b in start_b..d {
                        m.push((base + a, base + b));
                    }
                }
            }
            OmegaMask::new(shape, std::iter::empty(), m, true)
        }
        Scenario::Custom {
            st_pairs,
            m_pairs,
            data_block,
        } => OmegaMask::new(
            shape,
            st_pairs.iter().copied(),
            m_pairs.iter().copied(),
            *data_block,
        ),
    }
}

/// Union of several scenario masks, for combined knowledge patterns.
pub fn combined_scenario_mask(shape: ProblemShape, scenarios: &[Scenario]) -> Result<OmegaMask> {
    let mut mask = OmegaMask::empty(shape);
    for s in scenarios {
        mask = mask.union(&scenario_mask(shape, s)?)?;
    }
    Ok(mask)
}

/// The projective-measurement scenarios tile the measurement Gram block with
/// d x d blocks, one per measurement; that forces D = d^2 and K = d.
fn block_dim(shape: ProblemShape, scenario: &Scenario) -> Result<usize> {
    let d = (shape.ambient_dim as f64).sqrt().round() as usize;
    if d * d != shape.ambient_dim {
        return Err(Error::BadScenario {
            scenario: scenario.label().to_string(),
            reason: format!("D={} is not a perfect square", shape.ambient_dim),
        });
    }
    if shape.outcomes != d {
        return Err(Error::BadScenario {
            scenario: scenario.label().to_string(),
            reason: format!(
                "measurement blocks are {}x{} (K={}) but the block size is d={}",
                shape.outcomes, shape.outcomes, shape.outcomes, d
            ),
        });
    }
    Ok(d)
}

/// Known Gram entry values aligned with the mask's canonical enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct GramKnowledge {
    pub mask: OmegaMask,
    pub values: DVector<f64>,
}

impl GramKnowledge {
    pub fn new(mask: OmegaMask, values: DVector<f64>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::invalid(format!(
                "knowledge vector has {} values, mask has {} entries",
                values.len(),
                mask.len()
            )));
        }
        Ok(GramKnowledge { mask, values })
    }

    /// Values for the state pairs (the leading slice of the enumeration).
    pub fn st_values(&self) -> &[f64] {
        &self.values.as_slice()[..self.mask.num_st_pairs()]
    }

    /// Values for the measurement pairs.
    pub fn m_values(&self) -> &[f64] {
        let lo = self.mask.num_st_pairs();
        &self.values.as_slice()[lo..lo + self.mask.num_m_pairs()]
    }
}

/// Evaluates the masked Gram entries of a configuration:
/// `values[k] = p_i . p_j` for the k-th canonical pair.
pub fn extract_knowledge(config: &Configuration, mask: &OmegaMask) -> Result<GramKnowledge> {
    if *mask.shape() != config.shape {
        return Err(Error::invalid("mask shape does not match configuration"));
    }
    let values: Vec<f64> = mask
        .global_pairs()
        .iter()
        .map(|&(i, j)| config.entries.column(i).dot(&config.entries.column(j)))
        .collect();
    Ok(GramKnowledge {
        mask: mask.clone(),
        values: DVector::from_vec(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn shape(d: usize, w: usize, v: usize, k: usize) -> ProblemShape {
        ProblemShape::quantum(d, w, v, k).unwrap()
    }

    #[test]
    fn pure_states_mask_is_state_diagonal() {
        let mask = scenario_mask(shape(2, 3, 1, 2), &Scenario::PureStates).unwrap();
        let st: Vec<_> = mask.st_pairs().collect();
        assert_eq!(st, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(mask.num_m_pairs(), 0);
        assert!(mask.includes_data_block());
    }

    #[test]
    fn proj_unknown_deg_single_block() {
        let mask = scenario_mask(shape(2, 1, 1, 2), &Scenario::ProjUnknownDeg).unwrap();
        let m: Vec<_> = mask.m_pairs().collect();
        assert_eq!(m, vec![(0, 1)]);
    }

    #[test]
    fn proj_known_deg_two_blocks() {
        let mask = scenario_mask(shape(2, 1, 2, 2), &Scenario::ProjKnownDeg).unwrap();
        let m: Vec<_> = mask.m_pairs().collect();
        assert_eq!(m, vec![(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3)]);
    }

    #[test]
    fn projective_scenarios_need_square_ambient() {
        let s = ProblemShape::ambient(3, 1, 1, 1).unwrap();
        assert!(matches!(
            scenario_mask(s, &Scenario::ProjKnownDeg),
            Err(Error::BadScenario { .. })
        ));
    }

    #[test]
    fn projective_scenarios_need_matching_outcomes() {
        // D = 4 is square but K = 3 != d = 2
        let s = ProblemShape::quantum(2, 1, 1, 3).unwrap();
        assert!(matches!(
            scenario_mask(s, &Scenario::ProjUnknownDeg),
            Err(Error::BadScenario { .. })
        ));
    }

    #[test]
    fn canonicalization_sorts_and_dedups() {
        let s = shape(2, 3, 1, 2);
        let mask = OmegaMask::new(s, [(2, 0), (0, 2), (1, 1)], [(1, 0)], false).unwrap();
        let st: Vec<_> = mask.st_pairs().collect();
        assert_eq!(st, vec![(0, 2), (1, 1)]);
        let m: Vec<_> = mask.m_pairs().collect();
        assert_eq!(m, vec![(0, 1)]);
        assert_eq!(mask.len(), 3);
    }

    #[test]
    fn mask_len_counts_data_block() {
        let s = shape(2, 3, 2, 2);
        let mask = scenario_mask(s, &Scenario::PureStates).unwrap();
        assert_eq!(mask.len(), 3 + 3 * 4);
    }

    #[test]
    fn global_pairs_ordering() {
        let s = shape(2, 2, 1, 2);
        let mask = OmegaMask::new(s, [(0, 0)], [(0, 1)], true).unwrap();
        let pairs = mask.global_pairs();
        // st, then m offset by W=2, then data block row-major
        assert_eq!(pairs, vec![(0, 0), (2, 3), (0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn extract_identity_configuration() {
        let s = ProblemShape::ambient(2, 2, 0, 1).unwrap();
        let p = Configuration::new(s, DMatrix::identity(2, 2)).unwrap();
        let off = OmegaMask::new(s, [(0, 1)], [], false).unwrap();
        let k = extract_knowledge(&p, &off).unwrap();
        assert_eq!(k.values[0], 0.0);
        let diag = OmegaMask::new(s, [(0, 0)], [], false).unwrap();
        let k = extract_knowledge(&p, &diag).unwrap();
        assert_eq!(k.values[0], 1.0);
    }

    #[test]
    fn full_mask_reassembles_gram() {
        let s = ProblemShape::ambient(3, 2, 1, 2).unwrap();
        let mut rng = crate::seeding::rng_from_seed(3);
        let p = crate::model::gaussian_configuration(s, &mut rng);
        let mask = OmegaMask::full(s);
        let k = extract_knowledge(&p, &mask).unwrap();
        let g = p.gram();
        for (idx, (i, j)) in mask.global_pairs().iter().enumerate() {
            assert_eq!(k.values[idx], g[(*i, *j)]);
        }
    }

    #[test]
    fn union_merges_patterns() {
        let s = shape(2, 2, 1, 2);
        let a = scenario_mask(s, &Scenario::PureStates).unwrap();
        let b = scenario_mask(s, &Scenario::ProjUnknownDeg).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.num_st_pairs(), 2);
        assert_eq!(u.num_m_pairs(), 1);
        assert!(u.includes_data_block());
    }
}
