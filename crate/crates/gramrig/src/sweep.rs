//! Phase-diagram sweeps over (W, V) grids.
//!
//! Each grid cell runs the chosen completability test at its own derived
//! seed, so results are independent of parallel scheduling. Cells whose
//! shape cannot satisfy the spanning assumption (`N < D`) are assigned to
//! the completable phase by convention and never touch the rank machinery;
//! cells that fail inside the test (for example a rank-deficient data block)
//! record the error without aborting the sweep.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::global_test;
use crate::local::{local_test, TestBackend};
use crate::model::mask::combined_scenario_mask;
use crate::model::{ProblemShape, Scenario};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Local,
    Global,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestKind::Local => write!(f, "local"),
            TestKind::Global => write!(f, "global"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellVerdict {
    Completable,
    Flexible,
    ForcedCompletableByConvention,
    Error,
}

impl fmt::Display for CellVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CellVerdict::Completable => "completable",
            CellVerdict::Flexible => "flexible",
            CellVerdict::ForcedCompletableByConvention => "forced-completable-by-convention",
            CellVerdict::Error => "error",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    #[serde(rename = "W")]
    pub num_states: usize,
    #[serde(rename = "V")]
    pub num_measurements: usize,
    pub verdict: CellVerdict,
    pub rank: Option<usize>,
    pub target: Option<usize>,
    pub runtime_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseDiagram {
    #[serde(rename = "d", skip_serializing_if = "Option::is_none", default)]
    pub hilbert_dim: Option<usize>,
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(rename = "K")]
    pub outcomes: usize,
    pub scenario: String,
    pub test_kind: TestKind,
    pub convention_note: String,
    pub grid: Vec<GridCell>,
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub hilbert_dim: Option<usize>,
    pub ambient_dim: usize,
    pub scenarios: Vec<Scenario>,
    pub test_kind: TestKind,
    /// Inclusive ranges.
    pub w_range: (usize, usize),
    pub v_range: (usize, usize),
    pub outcomes: usize,
    pub backend: TestBackend,
    pub rel_tol: f64,
    pub trials: usize,
    pub seed: u64,
    pub jobs: usize,
    /// When false, runtime_ms is recorded as 0 everywhere so emitted files
    /// are byte-identical across runs and parallelism levels.
    pub measure_runtime: bool,
}

pub fn run_sweep(req: &SweepRequest) -> Result<PhaseDiagram> {
    if req.w_range.0 > req.w_range.1 || req.v_range.0 > req.v_range.1 {
        return Err(Error::invalid("sweep ranges must be non-empty"));
    }
    if req.scenarios.is_empty() {
        return Err(Error::invalid("sweep needs at least one scenario"));
    }
    let cells: Vec<(usize, usize)> = (req.w_range.0..=req.w_range.1)
        .flat_map(|w| (req.v_range.0..=req.v_range.1).map(move |v| (w, v)))
        .collect();
    log::info!(
        "sweeping {} cells (W {}..={}, V {}..={}) on {} threads",
        cells.len(),
        req.w_range.0,
        req.w_range.1,
        req.v_range.0,
        req.v_range.1,
        req.jobs.max(1)
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let grid: Vec<GridCell> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(w, v)| run_cell(req, w, v))
            .collect()
    });
    let scenario = req
        .scenarios
        .iter()
        .map(Scenario::label)
        .collect::<Vec<_>>()
        .join("+");
    Ok(PhaseDiagram {
        hilbert_dim: req.hilbert_dim,
        ambient_dim: req.ambient_dim,
        outcomes: req.outcomes,
        scenario,
        test_kind: req.test_kind,
        convention_note: format!(
            "cells with W + V*K < D = {} cannot satisfy the spanning assumption and are assigned to the completable phase by convention",
            req.ambient_dim
        ),
        grid,
    })
}

fn run_cell(req: &SweepRequest, w: usize, v: usize) -> GridCell {
    let shape = match build_shape(req, w, v) {
        Ok(s) => s,
        Err(e) => {
            return GridCell {
                num_states: w,
                num_measurements: v,
                verdict: CellVerdict::Error,
                rank: None,
                target: None,
                runtime_ms: 0,
                error: Some(e.to_string()),
            }
        }
    };
    if shape.num_columns() < shape.ambient_dim {
        return GridCell {
            num_states: w,
            num_measurements: v,
            verdict: CellVerdict::ForcedCompletableByConvention,
            rank: None,
            target: None,
            runtime_ms: 0,
            error: None,
        };
    }
    let started = Instant::now();
    let seed = derive_seed(req.seed, &[w as u64, v as u64]);
    let outcome =
        combined_scenario_mask(shape, &req.scenarios).and_then(|mask| match req.test_kind {
            TestKind::Local => local_test(shape, &mask, req.trials, req.backend, req.rel_tol, seed)
                .map(|verdict| {
                    (
                        verdict.completable,
                        verdict.rank_report.computed_rank,
                        verdict.target,
                    )
                }),
            TestKind::Global => {
                global_test(shape, &mask, req.trials, req.backend, req.rel_tol, seed).map(
                    |verdict| {
                        (
                            verdict.completable,
                            verdict.rank_report.computed_rank,
                            verdict.target,
                        )
                    },
                )
            }
        });
    let runtime_ms = if req.measure_runtime {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    match outcome {
        Ok((completable, rank, target)) => GridCell {
            num_states: w,
            num_measurements: v,
            verdict: if completable {
                CellVerdict::Completable
            } else {
                CellVerdict::Flexible
            },
            rank: Some(rank),
            target: Some(target),
            runtime_ms,
            error: None,
        },
        Err(e) => {
            log::debug!("cell (W={w}, V={v}) errored: {e}");
            GridCell {
                num_states: w,
                num_measurements: v,
                verdict: CellVerdict::Error,
                rank: None,
                target: None,
                runtime_ms,
                error: Some(e.to_string()),
            }
        }
    }
}

fn build_shape(req: &SweepRequest, w: usize, v: usize) -> Result<ProblemShape> {
    match req.hilbert_dim {
        Some(d) => ProblemShape::quantum(d, w, v, req.outcomes),
        None => ProblemShape::ambient(req.ambient_dim, w, v, req.outcomes),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepFormat {
    Csv,
    Json,
    Svg,
}

/// Writes a phase diagram to disk in the requested format.
pub fn emit(diagram: &PhaseDiagram, format: SweepFormat, path: &Path) -> Result<()> {
    let content = match format {
        SweepFormat::Csv => render_csv(diagram),
        SweepFormat::Json => {
            let mut s = serde_json::to_string_pretty(diagram)?;
            s.push('\n');
            s
        }
        SweepFormat::Svg => render_svg(diagram),
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(content.as_bytes())?;
    Ok(())
}

pub fn render_csv(diagram: &PhaseDiagram) -> String {
    let mut out = String::from("W,V,verdict,rank,target,runtime_ms\n");
    for cell in &diagram.grid {
        let rank = cell.rank.map_or(String::new(), |r| r.to_string());
        let target = cell.target.map_or(String::new(), |t| t.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cell.num_states, cell.num_measurements, cell.verdict, rank, target, cell.runtime_ms
        ));
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Static SVG: a (W, V) lattice with filled squares marking the completable
/// phase, in the style of a completability phase diagram.
pub fn render_svg(diagram: &PhaseDiagram) -> String {
    let (w_min, w_max, v_min, v_max) = grid_extent(diagram);
    let cols = w_max - w_min + 1;
    let rows = v_max - v_min + 1;
    let cell = 26usize;
    let margin_left = 56usize;
    let margin_bottom = 56usize;
    let margin_top = 44usize;
    let margin_right = 16usize;
    let width = margin_left + cols * cell + margin_right;
    let height = margin_top + rows * cell + margin_bottom;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    let d_label = diagram
        .hilbert_dim
        .map_or(format!("D={}", diagram.ambient_dim), |d| {
            format!("d={d} (D={})", diagram.ambient_dim)
        });
    s.push_str(&format!(
        "  <title>{}</title>\n",
        xml_escape(&format!(
            "{} completability, {}, scenario {}",
            diagram.test_kind, d_label, diagram.scenario
        ))
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        width / 2,
        xml_escape(&format!(
            "{} completability, {}, scenario {}",
            diagram.test_kind, d_label, diagram.scenario
        ))
    ));
    for cell_data in &diagram.grid {
        let cx = margin_left + (cell_data.num_states - w_min) * cell;
        // V grows upward
        let cy = margin_top + (v_max - cell_data.num_measurements) * cell;
        let (fill, stroke) = match cell_data.verdict {
            CellVerdict::Completable => ("#2c6fbb", "#1b4a80"),
            CellVerdict::ForcedCompletableByConvention => ("#9dc3e6", "#1b4a80"),
            CellVerdict::Flexible => ("#ffffff", "#999999"),
            CellVerdict::Error => ("#e8b4b4", "#a05252"),
        };
        s.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n",
            cx + 2,
            cy + 2,
            cell - 4,
            cell - 4
        ));
    }
    // axis tick labels, thinned when the grid is large
    let w_step = 1 + cols / 16;
    for w in (w_min..=w_max).step_by(w_step) {
        let x = margin_left + (w - w_min) * cell + cell / 2;
        let y = margin_top + rows * cell + 18;
        s.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{w}</text>\n"
        ));
    }
    let v_step = 1 + rows / 16;
    for v in (v_min..=v_max).step_by(v_step) {
        let x = margin_left - 8;
        let y = margin_top + (v_max - v) * cell + cell / 2 + 4;
        s.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v}</text>\n"
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">number of states W</text>\n",
        margin_left + cols * cell / 2,
        height - 14
    ));
    s.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">number of measurements V</text>\n",
        margin_top + rows * cell / 2,
        margin_top + rows * cell / 2
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">filled squares: completable phase</text>\n",
        margin_left,
        height - 32
    ));
    s.push_str("</svg>\n");
    s
}

fn grid_extent(diagram: &PhaseDiagram) -> (usize, usize, usize, usize) {
    let mut w_min = usize::MAX;
    let mut w_max = 0;
    let mut v_min = usize::MAX;
    let mut v_max = 0;
    for c in &diagram.grid {
        w_min = w_min.min(c.num_states);
        w_max = w_max.max(c.num_states);
        v_min = v_min.min(c.num_measurements);
        v_max = v_max.max(c.num_measurements);
    }
    if diagram.grid.is_empty() {
        (1, 1, 1, 1)
    } else {
        (w_min, w_max, v_min, v_max)
    }
}
