//! Raw and reconstructed functional panels.
//!
//! A [`DiscretePanel`] holds one group's observations: `n` samples by `p`
//! dimensions, each cell a [`DiscreteCurve`] with its own (possibly
//! asynchronous) time grid inside `[0, 1]`. Callers rescale time to `[0, 1]`
//! beforehand. A [`CurvePanel`] is the reconstructed form: every curve is a
//! coefficient vector over one shared spline basis.
//!
//! The long CSV interchange format is
//! `group,sample_id,dim,t,value` with `group ∈ {X, Y}`, `t` a decimal in
//! `[0, 1]` and `value` a finite decimal. Loading is order-insensitive
//! (rows may appear in any order) and dimensions are matched across groups
//! by label after sorting, so the statistic always sums over aligned
//! dimensions.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bspline::SplineBasis;
use crate::error::{MrpError, Result};

/// One curve observed at discrete time points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    /// Strictly increasing time points in `[0, 1]`. Shared so that
    /// synchronized panels keep one copy of the grid.
    pub grid: Arc<[f64]>,
    /// Observed values, one per grid point.
    pub values: Vec<f64>,
}

impl DiscreteCurve {
    pub fn new(grid: impl Into<Arc<[f64]>>, values: Vec<f64>) -> Self {
        DiscreteCurve {
            grid: grid.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// One group's raw observations: `n` samples by `p` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePanel {
    pub group_label: String,
    /// Sample identifiers, in the panel's row order.
    pub sample_ids: Vec<String>,
    /// Dimension labels, sorted; shared ordering with the other group.
    pub dim_labels: Vec<String>,
    /// `curves[i][k]` is sample `i`, dimension `k`.
    pub curves: Vec<Vec<DiscreteCurve>>,
}

impl DiscretePanel {
    /// Number of samples.
    pub fn n(&self) -> usize {
        self.curves.len()
    }

    /// Number of dimensions.
    pub fn p(&self) -> usize {
        self.dim_labels.len()
    }

    /// Smallest observation count over all cells.
    pub fn min_points(&self) -> usize {
        self.curves
            .iter()
            .flat_map(|row| row.iter().map(|c| c.len()))
            .min()
            .unwrap_or(0)
    }

    /// Build a synchronized panel where every cell shares `grid` and the
    /// values of cell `(i, k)` are `values[i][k]`.
    pub fn synchronized(
        group_label: impl Into<String>,
        grid: Arc<[f64]>,
        values: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        let n = values.len();
        let p = values.first().map_or(0, |row| row.len());
        let curves = values
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|vals| DiscreteCurve::new(grid.clone(), vals))
                    .collect()
            })
            .collect();
        DiscretePanel {
            group_label: group_label.into(),
            sample_ids: (0..n).map(|i| format!("{:06}", i + 1)).collect(),
            dim_labels: (0..p).map(|k| format!("{:06}", k + 1)).collect(),
            curves,
        }
    }
}

/// Kinds of invariant breaches reported by [`validate_panel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    GridNotIncreasing,
    GridOutOfDomain,
    NonFiniteValue,
    LengthMismatch,
    TooFewPoints,
    RaggedRow,
    EmptyPanel,
}

/// One invariant breach with its `(sample, dimension)` location.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample_index: usize,
    pub dim_index: usize,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(sample {}, dim {}): {}",
            self.sample_index, self.dim_index, self.message
        )
    }
}

/// Check every panel invariant and report one violation per breach.
///
/// This is a diagnostic: it never fails, and an empty result means the
/// panel is well-formed.
pub fn validate_panel(panel: &DiscretePanel) -> Vec<Violation> {
    let mut out = Vec::new();
    if panel.curves.is_empty() || panel.p() == 0 {
        out.push(Violation {
            sample_index: 0,
            dim_index: 0,
            kind: ViolationKind::EmptyPanel,
            message: "panel must have n >= 1 samples and p >= 1 dimensions".into(),
        });
        return out;
    }
    for (i, row) in panel.curves.iter().enumerate() {
        if row.len() != panel.p() {
            out.push(Violation {
                sample_index: i,
                dim_index: 0,
                kind: ViolationKind::RaggedRow,
                message: format!("sample has {} cells, panel has p = {}", row.len(), panel.p()),
            });
            continue;
        }
        for (k, curve) in row.iter().enumerate() {
            let loc = |kind, message: String| Violation {
                sample_index: i,
                dim_index: k,
                kind,
                message,
            };
            if curve.values.len() != curve.grid.len() {
                out.push(loc(
                    ViolationKind::LengthMismatch,
                    format!(
                        "{} grid points but {} values",
                        curve.grid.len(),
                        curve.values.len()
                    ),
                ));
            }
            if curve.grid.len() < 2 {
                out.push(loc(
                    ViolationKind::TooFewPoints,
                    format!("curve has {} points, need at least 2", curve.grid.len()),
                ));
            }
            if curve.grid.windows(2).any(|w| w[0] >= w[1]) {
                out.push(loc(
                    ViolationKind::GridNotIncreasing,
                    "grid not strictly increasing".into(),
                ));
            }
            if curve
                .grid
                .iter()
                .any(|&t| !t.is_finite() || !(0.0..=1.0).contains(&t))
            {
                out.push(loc(
                    ViolationKind::GridOutOfDomain,
                    "grid point outside [0, 1]".into(),
                ));
            }
            if curve.values.iter().any(|v| !v.is_finite()) {
                out.push(loc(ViolationKind::NonFiniteValue, "non-finite value".into()));
            }
        }
    }
    out
}

/// Reconstructed group: shared basis plus one `p x L` coefficient matrix
/// per sample.
#[derive(Debug, Clone)]
pub struct CurvePanel {
    pub basis: Arc<SplineBasis>,
    /// `coeffs[i]` is the `p x L` coefficient matrix of sample `i`.
    pub coeffs: Vec<DMatrix<f64>>,
}

impl CurvePanel {
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn p(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.nrows())
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    /// Evaluate sample `i` at time `t`: a length-`p` vector of curve values.
    pub fn eval_sample(&self, i: usize, t: f64) -> Result<Vec<f64>> {
        let b = self.basis.evaluate(t)?;
        let c = &self.coeffs[i];
        Ok((0..c.nrows())
            .map(|k| c.row(k).iter().zip(&b).map(|(cv, bv)| cv * bv).sum())
            .collect())
    }
}

const CSV_HEADER: [&str; 5] = ["group", "sample_id", "dim", "t", "value"];

/// Load a pair of panels (group `X`, group `Y`) from long-format CSV.
pub fn load_long_csv(path: impl AsRef<Path>) -> Result<(DiscretePanel, DiscretePanel)> {
    let file = std::fs::File::open(path)?;
    load_long_csv_reader(file)
}

/// Same as [`load_long_csv`] but from any reader.
pub fn load_long_csv_reader(reader: impl Read) -> Result<(DiscretePanel, DiscretePanel)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rd
            .headers()
            .map_err(|e| MrpError::Parse { line: 1, msg: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(MrpError::Parse {
                line: 1,
                msg: format!("expected header {:?}, got {:?}", CSV_HEADER.join(","), got.join(",")),
            });
        }
    }

    // group -> sample -> dim -> (t, value) rows
    let mut groups: BTreeMap<String, GroupRows> = BTreeMap::new();

    for rec in rd.records() {
        let rec = rec.map_err(|e| MrpError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(MrpError::Parse {
                line,
                msg: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        let group = rec[0].to_string();
        if group != "X" && group != "Y" {
            return Err(MrpError::Parse {
                line,
                msg: format!("group must be X or Y, got {:?}", &rec[0]),
            });
        }
        let t: f64 = rec[3].parse().map_err(|e| MrpError::Parse {
            line,
            msg: format!("bad t {:?}: {e}", &rec[3]),
        })?;
        if !t.is_finite() || !(0.0..=1.0).contains(&t) {
            return Err(MrpError::Parse {
                line,
                msg: format!("t = {t} outside [0, 1]"),
            });
        }
        let value: f64 = rec[4].parse().map_err(|e| MrpError::Parse {
            line,
            msg: format!("bad value {:?}: {e}", &rec[4]),
        })?;
        if !value.is_finite() {
            return Err(MrpError::Parse {
                line,
                msg: format!("non-finite value {:?}", &rec[4]),
            });
        }
        groups
            .entry(group)
            .or_default()
            .entry(rec[1].to_string())
            .or_default()
            .entry(rec[2].to_string())
            .or_default()
            .push((t, value));
    }

    let dims_x = group_dims(&groups, "X")?;
    let dims_y = group_dims(&groups, "Y")?;
    if dims_x != dims_y {
        return Err(MrpError::DimensionMismatch(format!(
            "group X has dims {:?}, group Y has dims {:?}",
            dims_x, dims_y
        )));
    }

    let px = assemble_panel(groups.remove("X").unwrap(), "X", &dims_x)?;
    let py = assemble_panel(groups.remove("Y").unwrap(), "Y", &dims_x)?;
    Ok((px, py))
}

type GroupRows = BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>>;

fn group_dims(groups: &BTreeMap<String, GroupRows>, label: &str) -> Result<Vec<String>> {
    let group = groups
        .get(label)
        .ok_or_else(|| MrpError::InvalidPanel(format!("group {label} has no rows")))?;
    let mut dims: Vec<String> = Vec::new();
    for (sid, cells) in group {
        let these: Vec<String> = cells.keys().cloned().collect();
        if dims.is_empty() {
            dims = these;
        } else if dims != these {
            return Err(MrpError::InvalidPanel(format!(
                "group {label}: sample {sid} observes dims {:?}, expected {:?}",
                these, dims
            )));
        }
    }
    Ok(dims)
}

fn assemble_panel(samples: GroupRows, label: &str, dims: &[String]) -> Result<DiscretePanel> {
    let mut sample_ids = Vec::with_capacity(samples.len());
    let mut curves = Vec::with_capacity(samples.len());
    for (sid, mut cells) in samples {
        let mut row = Vec::with_capacity(dims.len());
        for dim in dims {
            let mut obs = cells.remove(dim).expect("dim set verified above");
            obs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("t values are finite"));
            for w in obs.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(MrpError::DuplicateRow(format!(
                        "group {label}, sample {sid}, dim {dim}, t = {}",
                        w[0].0
                    )));
                }
            }
            let (grid, values): (Vec<f64>, Vec<f64>) = obs.into_iter().unzip();
            row.push(DiscreteCurve::new(grid, values));
        }
        sample_ids.push(sid);
        curves.push(row);
    }
    let panel = DiscretePanel {
        group_label: label.to_string(),
        sample_ids,
        dim_labels: dims.to_vec(),
        curves,
    };
    let violations = validate_panel(&panel);
    if let Some(v) = violations.first() {
        return Err(MrpError::InvalidPanel(format!(
            "group {label} {v}{}",
            if violations.len() > 1 {
                format!(" (+{} more)", violations.len() - 1)
            } else {
                String::new()
            }
        )));
    }
    Ok(panel)
}

/// Serialize both panels to the long CSV format. Values are written in the
/// shortest form that round-trips bit-exactly.
pub fn save_long_csv(
    px: &DiscretePanel,
    py: &DiscretePanel,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    save_long_csv_writer(px, py, file)
}

pub fn save_long_csv_writer(
    px: &DiscretePanel,
    py: &DiscretePanel,
    writer: impl Write,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(writer);
    wr.write_record(CSV_HEADER).map_err(csv_io)?;
    for panel in [px, py] {
        for (i, row) in panel.curves.iter().enumerate() {
            for (k, curve) in row.iter().enumerate() {
                for (t, v) in curve.grid.iter().zip(&curve.values) {
                    wr.write_record([
                        panel.group_label.as_str(),
                        panel.sample_ids[i].as_str(),
                        panel.dim_labels[k].as_str(),
                        &format!("{t}"),
                        &format!("{v}"),
                    ])
                    .map_err(csv_io)?;
                }
            }
        }
    }
    wr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> MrpError {
    MrpError::Parse {
        line: 0,
        msg: e.to_string(),
    }
}
