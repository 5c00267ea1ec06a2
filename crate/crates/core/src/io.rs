//! JSON encodings of instances, boundary points and certificates.
//!
//! Complex numbers are `[re, im]` pairs; a bare number is accepted as a real
//! entry on input. Matrices are lists of rows, except boundary-point and
//! subspace bases, which are lists of columns.

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryPoint;
use crate::error::{Error, Result};
use crate::matrix_scaling::NonnegMatrixInstance;
use crate::numerics::{c64, CMat, SubspaceBasis};
use crate::operator_scaling::{Certificate, MarginalTarget, OperatorTuple, ScaleResult, Witness};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexJson {
    Pair([f64; 2]),
    Real(f64),
}

impl ComplexJson {
    fn value(self) -> crate::numerics::C64 {
        match self {
            ComplexJson::Pair([re, im]) => c64(re, im),
            ComplexJson::Real(re) => c64(re, 0.0),
        }
    }
}

pub type MatrixJson = Vec<Vec<ComplexJson>>;

fn lines_to_matrix(lines: &[Vec<ComplexJson>], what: &str, by_columns: bool, rows_hint: Option<usize>) -> Result<CMat> {
    let width = match lines.first() {
        Some(l) => l.len(),
        None => {
            let r = rows_hint.unwrap_or(0);
            return Ok(CMat::zeros(r, 0));
        }
    };
    for (i, l) in lines.iter().enumerate() {
        if l.len() != width {
            return Err(Error::InvalidInput(format!("{what}: line {i} has {} entries, expected {width}", l.len())));
        }
    }
    let (rows, cols) = if by_columns { (width, lines.len()) } else { (lines.len(), width) };
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let e = if by_columns { lines[j][i] } else { lines[i][j] };
        e.value()
    }))
}

pub fn matrix_from_json(rows: &MatrixJson, what: &str) -> Result<CMat> {
    lines_to_matrix(rows, what, false, None)
}

pub fn matrix_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| ComplexJson::Pair([m[(i, j)].re, m[(i, j)].im])).collect())
        .collect()
}

fn columns_to_json(m: &CMat) -> MatrixJson {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| ComplexJson::Pair([m[(i, j)].re, m[(i, j)].im])).collect())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryPointJson {
    pub lambda: Vec<f64>,
    /// Columns of the frame.
    pub basis: MatrixJson,
}

impl BoundaryPointJson {
    pub fn from_point(p: &BoundaryPoint) -> Self {
        Self { lambda: p.lambda().to_vec(), basis: columns_to_json(p.basis()) }
    }

    pub fn to_point(&self) -> Result<BoundaryPoint> {
        let basis = lines_to_matrix(&self.basis, "basis", true, None)?;
        BoundaryPoint::canonicalize(&self.lambda, &basis)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceJson {
    pub ambient: usize,
    /// Orthonormal columns; empty for `{0}`.
    pub basis: MatrixJson,
}

impl SubspaceJson {
    pub fn from_subspace(x: &SubspaceBasis) -> Self {
        Self { ambient: x.ambient_dim(), basis: columns_to_json(x.basis()) }
    }

    pub fn to_subspace(&self) -> Result<SubspaceBasis> {
        let m = lines_to_matrix(&self.basis, "subspace basis", true, Some(self.ambient))?;
        if m.nrows() != self.ambient {
            return Err(Error::DimensionMismatch { expected: self.ambient, found: m.nrows() });
        }
        Ok(SubspaceBasis::span(&m, None))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixInstanceJson {
    pub a: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
}

impl MatrixInstanceJson {
    pub fn from_instance(inst: &NonnegMatrixInstance) -> Self {
        let a = inst.a();
        Self {
            a: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
            r: inst.r().to_vec(),
            c: inst.c().to_vec(),
        }
    }

    pub fn to_instance(&self) -> Result<NonnegMatrixInstance> {
        let n = self.a.len();
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!("a: row {i} has {} entries, expected {n}", row.len())));
            }
        }
        let a = DMatrix::from_fn(n, n, |i, j| self.a[i][j]);
        NonnegMatrixInstance::new(a, self.r.clone(), self.c.clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorInstanceJson {
    pub n: usize,
    pub mats: Vec<MatrixJson>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Frame of the row flag as matrix columns; `null` is the standard flag.
    #[serde(rename = "flagU", default)]
    pub flag_u: Option<MatrixJson>,
    #[serde(rename = "flagV", default)]
    pub flag_v: Option<MatrixJson>,
}

impl OperatorInstanceJson {
    pub fn from_parts(a: &OperatorTuple, target: &MarginalTarget) -> Self {
        Self {
            n: a.n(),
            mats: a.mats().iter().map(matrix_to_json).collect(),
            lambda: target.lambda().to_vec(),
            mu: target.mu().to_vec(),
            flag_u: Some(matrix_to_json(target.u())),
            flag_v: Some(matrix_to_json(target.v())),
        }
    }

    pub fn to_parts(&self) -> Result<(OperatorTuple, MarginalTarget)> {
        let mats = self
            .mats
            .iter()
            .enumerate()
            .map(|(k, m)| matrix_from_json(m, &format!("mats[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        for (k, m) in mats.iter().enumerate() {
            if m.shape() != (self.n, self.n) {
                return Err(Error::InvalidInput(format!(
                    "mats[{k}] is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols(),
                    n = self.n
                )));
            }
        }
        let a = OperatorTuple::new(mats)?;
        let frame = |f: &Option<MatrixJson>, what: &str| -> Result<CMat> {
            match f {
                Some(m) => {
                    let m = matrix_from_json(m, what)?;
                    if m.shape() != (self.n, self.n) {
                        return Err(Error::InvalidInput(format!("{what} must be {n}x{n}", n = self.n)));
                    }
                    Ok(m)
                }
                None => Ok(CMat::identity(self.n, self.n)),
            }
        };
        for (what, w) in [("lambda", &self.lambda), ("mu", &self.mu)] {
            if w.len() != self.n {
                return Err(Error::InvalidInput(format!("{what} has {} entries, expected {}", w.len(), self.n)));
            }
        }
        let p = BoundaryPoint::canonicalize(&self.lambda, &frame(&self.flag_u, "flagU")?)?;
        let q = BoundaryPoint::canonicalize(&self.mu, &frame(&self.flag_v, "flagV")?)?;
        Ok((a, MarginalTarget::new(p, q)?))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessJson {
    pub x: SubspaceJson,
    pub y: SubspaceJson,
    pub violation: f64,
}

impl WitnessJson {
    pub fn from_witness(w: &Witness) -> Self {
        Self { x: SubspaceJson::from_subspace(&w.x), y: SubspaceJson::from_subspace(&w.y), violation: w.violation }
    }

    pub fn to_witness(&self) -> Result<Witness> {
        Ok(Witness { x: self.x.to_subspace()?, y: self.y.to_subspace()?, violation: self.violation })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleResultJson {
    pub converged: bool,
    pub residual: f64,
    pub iters: usize,
    pub defects: [f64; 2],
    pub g: MatrixJson,
    pub h: MatrixJson,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub scaling_norm_trace: Vec<f64>,
}

impl ScaleResultJson {
    pub fn from_result(r: &ScaleResult) -> Self {
        Self {
            converged: r.converged,
            residual: r.residual,
            iters: r.iters,
            defects: [r.defects.0, r.defects.1],
            g: matrix_to_json(&r.g),
            h: matrix_to_json(&r.h),
            objective_trace: r.objective_trace.clone(),
            residual_trace: r.residual_trace.clone(),
            scaling_norm_trace: r.scaling_norm_trace.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateJson {
    pub verdict: String,
    pub witness: Option<WitnessJson>,
    pub best_residual: Option<f64>,
    pub sweeps: usize,
    pub candidates_tried: usize,
    pub note: Option<String>,
    pub scaling: Option<ScaleResultJson>,
}

impl CertificateJson {
    pub fn from_certificate(c: &Certificate) -> Self {
        Self {
            verdict: c.verdict.as_str().to_string(),
            witness: c.witness.as_ref().map(WitnessJson::from_witness),
            best_residual: c.best_residual,
            sweeps: c.sweeps,
            candidates_tried: c.candidates_tried,
            note: c.note.clone(),
            scaling: c.scaling.as_ref().map(ScaleResultJson::from_result),
        }
    }
}

/// Parses JSON, reporting the offending field path and position on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::InvalidInput(format!("at field `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
    })
}
