//! File formats: JSON for masks, configurations, and knowledge vectors;
//! plain header-less CSV for matrices.
//!
//! Pair indices are 1-based in files and 0-based in memory; matrix entries
//! are row-major lists.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Configuration, GramKnowledge, OmegaMask, ProblemShape};

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskFile {
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(rename = "W")]
    pub num_states: usize,
    #[serde(rename = "V")]
    pub num_measurements: usize,
    #[serde(rename = "K")]
    pub outcomes: usize,
    #[serde(rename = "d", skip_serializing_if = "Option::is_none", default)]
    pub hilbert_dim: Option<usize>,
    /// 1-based pairs into the state block.
    pub st_pairs: Vec<(usize, usize)>,
    /// 1-based pairs into the measurement block.
    pub m_pairs: Vec<(usize, usize)>,
    pub data_block: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigurationFile {
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(rename = "W")]
    pub num_states: usize,
    #[serde(rename = "V")]
    pub num_measurements: usize,
    #[serde(rename = "K")]
    pub outcomes: usize,
    #[serde(rename = "d", skip_serializing_if = "Option::is_none", default)]
    pub hilbert_dim: Option<usize>,
    /// Row-major `D x N` entries.
    pub entries: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KnowledgeFile {
    pub mask: MaskFile,
    /// Values aligned with the mask's canonical enumeration (state pairs,
    /// then measurement pairs, then the data block row-major).
    pub values: Vec<f64>,
}

fn shape_from_file(
    hilbert_dim: Option<usize>,
    ambient_dim: usize,
    num_states: usize,
    num_measurements: usize,
    outcomes: usize,
) -> Result<ProblemShape> {
    match hilbert_dim {
        Some(d) => {
            if d * d != ambient_dim {
                return Err(Error::invalid(format!(
                    "file declares d={d} but D={ambient_dim} is not d^2"
                )));
            }
            ProblemShape::quantum(d, num_states, num_measurements, outcomes)
        }
        None => ProblemShape::ambient(ambient_dim, num_states, num_measurements, outcomes),
    }
}

fn to_zero_based(pairs: &[(usize, usize)], what: &str) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            if i == 0 || j == 0 {
                Err(Error::invalid(format!(
                    "{what} pair ({i},{j}) is not 1-based"
                )))
            } else {
                Ok((i - 1, j - 1))
            }
        })
        .collect()
}

impl MaskFile {
    pub fn from_mask(mask: &OmegaMask) -> Self {
        let shape = mask.shape();
        MaskFile {
            ambient_dim: shape.ambient_dim,
            num_states: shape.num_states,
            num_measurements: shape.num_measurements,
            outcomes: shape.outcomes,
            hilbert_dim: shape.hilbert_dim,
            st_pairs: mask.st_pairs().map(|(i, j)| (i + 1, j + 1)).collect(),
            m_pairs: mask.m_pairs().map(|(i, j)| (i + 1, j + 1)).collect(),
            data_block: mask.includes_data_block(),
        }
    }

    pub fn into_mask(&self) -> Result<OmegaMask> {
        let shape = shape_from_file(
            self.hilbert_dim,
            self.ambient_dim,
            self.num_states,
            self.num_measurements,
            self.outcomes,
        )?;
        OmegaMask::new(
            shape,
            to_zero_based(&self.st_pairs, "state")?,
            to_zero_based(&self.m_pairs, "measurement")?,
            self.data_block,
        )
    }
}

impl ConfigurationFile {
    pub fn from_configuration(config: &Configuration) -> Self {
        let shape = config.shape;
        let mut entries = Vec::with_capacity(config.entries.len());
        for r in 0..config.entries.nrows() {
            for c in 0..config.entries.ncols() {
                entries.push(config.entries[(r, c)]);
            }
        }
        ConfigurationFile {
            ambient_dim: shape.ambient_dim,
            num_states: shape.num_states,
            num_measurements: shape.num_measurements,
            outcomes: shape.outcomes,
            hilbert_dim: shape.hilbert_dim,
            entries,
        }
    }

    pub fn into_configuration(&self) -> Result<Configuration> {
        let shape = shape_from_file(
            self.hilbert_dim,
            self.ambient_dim,
            self.num_states,
            self.num_measurements,
            self.outcomes,
        )?;
        let n = shape.num_columns();
        if self.entries.len() != shape.ambient_dim * n {
            return Err(Error::invalid(format!(
                "configuration file has {} entries, expected {}",
                self.entries.len(),
                shape.ambient_dim * n
            )));
        }
        let entries = DMatrix::from_row_slice(shape.ambient_dim, n, &self.entries);
        Configuration::new(shape, entries)
    }
}

impl KnowledgeFile {
    pub fn from_knowledge(knowledge: &GramKnowledge) -> Self {
        KnowledgeFile {
            mask: MaskFile::from_mask(&knowledge.mask),
            values: knowledge.values.iter().copied().collect(),
        }
    }

    pub fn into_knowledge(&self) -> Result<GramKnowledge> {
        let mask = self.mask.into_mask()?;
        GramKnowledge::new(mask, DVector::from_vec(self.values.clone()))
    }
}

pub fn read_mask(path: &Path) -> Result<OmegaMask> {
    let text = std::fs::read_to_string(path)?;
    let file: MaskFile = serde_json::from_str(&text)?;
    file.into_mask()
}

pub fn write_mask(path: &Path, mask: &OmegaMask) -> Result<()> {
    let mut json = serde_json::to_string_pretty(&MaskFile::from_mask(mask))?;
    json.push('\n');
    Ok(std::fs::write(path, json)?)
}

pub fn read_configuration(path: &Path) -> Result<Configuration> {
    let text = std::fs::read_to_string(path)?;
    let file: ConfigurationFile = serde_json::from_str(&text)?;
    file.into_configuration()
}

pub fn write_configuration(path: &Path, config: &Configuration) -> Result<()> {
    let mut json = serde_json::to_string_pretty(&ConfigurationFile::from_configuration(config))?;
    json.push('\n');
    Ok(std::fs::write(path, json)?)
}

pub fn read_knowledge(path: &Path) -> Result<GramKnowledge> {
    let text = std::fs::read_to_string(path)?;
    let file: KnowledgeFile = serde_json::from_str(&text)?;
    file.into_knowledge()
}

pub fn write_knowledge(path: &Path, knowledge: &GramKnowledge) -> Result<()> {
    let mut json = serde_json::to_string_pretty(&KnowledgeFile::from_knowledge(knowledge))?;
    json.push('\n');
    Ok(std::fs::write(path, json)?)
}

/// Plain comma-separated row-major matrix, no header.
pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..matrix.nrows() {
        for c in 0..matrix.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", matrix[(r, c)]));
        }
        out.push('\n');
    }
    Ok(std::fs::write(path, out)?)
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::invalid(format!("CSV line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::invalid(format!(
                    "CSV line {} has {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid("CSV file holds no rows"));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extract_knowledge, scenario_mask, Scenario};
    use crate::seeding::rng_from_seed;

    #[test]
    fn mask_json_uses_one_based_pairs() {
        let shape = ProblemShape::quantum(2, 3, 1, 2).unwrap();
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let file = MaskFile::from_mask(&mask);
        assert_eq!(file.st_pairs, vec![(1, 1), (2, 2), (3, 3)]);
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"st_pairs\":[[1,1],[2,2],[3,3]]"));
        let back: MaskFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_mask().unwrap(), mask);
    }

    #[test]
    fn zero_based_pair_in_file_rejected() {
        let json = r#"{"D":4,"W":2,"V":1,"K":2,"st_pairs":[[0,1]],"m_pairs":[],"data_block":true}"#;
        let file: MaskFile = serde_json::from_str(json).unwrap();
        assert!(file.into_mask().is_err());
    }

    #[test]
    fn configuration_roundtrip() {
        let shape = ProblemShape::ambient(3, 2, 1, 2).unwrap();
        let mut rng = rng_from_seed(2);
        let config = crate::model::gaussian_configuration(shape, &mut rng);
        let file = ConfigurationFile::from_configuration(&config);
        let back = file.into_configuration().unwrap();
        assert_eq!(back.entries, config.entries);
        assert_eq!(back.shape, config.shape);
    }

    #[test]
    fn knowledge_roundtrip_via_files() {
        let shape = ProblemShape::quantum(2, 4, 2, 2).unwrap();
        let mut rng = rng_from_seed(3);
        let config = crate::model::gaussian_configuration(shape, &mut rng);
        let mask = scenario_mask(shape, &Scenario::PureStates).unwrap();
        let knowledge = extract_knowledge(&config, &mask).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("knowledge.json");
        write_knowledge(&path, &knowledge).unwrap();
        let back = read_knowledge(&path).unwrap();
        assert_eq!(back.mask, knowledge.mask);
        assert_eq!(back.values, knowledge.values);
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.5, -2.0, 0.25, 1e-9, 3.0, -0.125]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
    }
}
