//! Certificates for the circle-criterion observer design inequality.
//!
//! With `Ab(p^) = A(p^) + L(p^) C`, `Hb(p^) = H + K(p^) C` and
//! `Lam = diag(l_1, ..)`, the design matrix is the symmetric block matrix
//!
//! ```text
//! | -P                                                           |
//! | -Ab' P      kx/2 I - P/2                                     |
//! | -G' P       M Hb / 2        -M Lam^-1                        |
//! |  B(p)' P    0               0             -kv/2 I            |
//! |  L' P       0               -K' M / 2     0         -kw/2 I  |
//! ```
//!
//! (upper triangle by symmetry). A certificate `(P, M, kx, kv, kw, L, K)` is
//! valid on a parameter box when `P > 0` and the matrix is negative
//! semidefinite for every pair `(p, p^)` of box points. All blocks are affine
//! in `(p, p^)` when the plant and gains are, so checking the vertex pairs is
//! enough.
//!
//! Eliminating the `-P` block by a Schur complement gives
//! `Q' P Q <= reduced` with `Q = [Ab, G, -B, -L]`; [`schur_reduce`] computes
//! both sides from the assembled matrix.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::model::{LureSystem, ParameterBox};
use crate::observer::GainSchedule;
use crate::sampling::grid_samples;
use crate::{Matrix, Vector};

/// Absolute eigenvalue threshold for negative semidefiniteness.
pub const NSD_TOLERANCE: f64 = 1e-9;
/// Threshold on `lambda_min(P) / lambda_max(P)` for positive definiteness.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-9;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const SHIPPED_CERTIFICATE: &str = include_str!("../data/case_study_certificate.json");

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    /// Lyapunov matrix, stored exactly symmetric.
    pub p: Matrix,
    /// Diagonal of the multiplier `M`.
    pub m: Vector,
    pub kappa_x: f64,
    pub kappa_v: f64,
    pub kappa_w: f64,
    pub schedule: GainSchedule,
    /// Synthesis objective recorded with the certificate, if any.
    pub objective: Option<f64>,
}

/// On-disk layout: row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub kappa_x: f64,
    pub kappa_v: f64,
    pub kappa_w: f64,
    #[serde(rename = "L0")]
    pub l0: Vec<Vec<f64>>,
    #[serde(rename = "L1")]
    pub l1: Vec<Vec<f64>>,
    #[serde(rename = "K0")]
    pub k0: Vec<Vec<f64>>,
    #[serde(rename = "K1")]
    pub k1: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

fn matrix_field(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(config_err(format!("field `{name}` must be a non-empty matrix")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(config_err(format!(
            "field `{name}`: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(config_err(format!("field `{name}` contains non-finite entries")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Certificate {
    pub fn from_file_repr(f: &CertificateFile) -> Result<Self> {
        let p = matrix_field("P", &f.p)?;
        if p.nrows() != p.ncols() {
            return Err(config_err(format!("field `P` must be square, got {:?}", p.shape())));
        }
        if (&p - p.transpose()).amax() > SYMMETRY_TOLERANCE {
            return Err(config_err("field `P` is not symmetric"));
        }
        let p = (&p + p.transpose()) * 0.5;

        let m_full = matrix_field("M", &f.m)?;
        if m_full.nrows() != m_full.ncols() {
            return Err(config_err(format!("field `M` must be square, got {:?}", m_full.shape())));
        }
        let off_diag = (0..m_full.nrows())
            .flat_map(|i| (0..m_full.ncols()).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .any(|(i, j)| m_full[(i, j)].abs() > SYMMETRY_TOLERANCE);
        if off_diag {
            return Err(config_err("field `M` must be diagonal"));
        }
        let m = m_full.diagonal();
        if m.iter().any(|x| *x <= 0.0) {
            return Err(config_err("field `M` must have positive diagonal entries"));
        }
        for (name, v) in [("kappa_x", f.kappa_x), ("kappa_v", f.kappa_v), ("kappa_w", f.kappa_w)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("field `{name}` must be > 0, got {v}")));
            }
        }
        let l0 = matrix_field("L0", &f.l0)?;
        let l1 = matrix_field("L1", &f.l1)?;
        let k0 = matrix_field("K0", &f.k0)?;
        let k1 = matrix_field("K1", &f.k1)?;
        if l1.shape() != l0.shape() {
            return Err(config_err(format!("field `L1` has shape {:?}, `L0` has {:?}", l1.shape(), l0.shape())));
        }
        if k1.shape() != k0.shape() {
            return Err(config_err(format!("field `K1` has shape {:?}, `K0` has {:?}", k1.shape(), k0.shape())));
        }
        if l0.nrows() != p.nrows() {
            return Err(config_err(format!("field `L0` must have {} rows (size of P)", p.nrows())));
        }
        if k0.nrows() != m.len() {
            return Err(config_err(format!("field `K0` must have {} rows (size of M)", m.len())));
        }
        Ok(Certificate {
            p,
            m,
            kappa_x: f.kappa_x,
            kappa_v: f.kappa_v,
            kappa_w: f.kappa_w,
            schedule: GainSchedule::affine(l0, l1, k0, k1)?,
            objective: f.objective,
        })
    }

    pub fn to_file_repr(&self) -> CertificateFile {
        let slope = |m: &crate::model::AffineMatrix| {
            m.slopes.first().cloned().unwrap_or_else(|| Matrix::zeros(m.shape().0, m.shape().1))
        };
        CertificateFile {
            p: rows_of(&self.p),
            m: rows_of(&Matrix::from_diagonal(&self.m)),
            kappa_x: self.kappa_x,
            kappa_v: self.kappa_v,
            kappa_w: self.kappa_w,
            l0: rows_of(&self.schedule.l.constant),
            l1: rows_of(&slope(&self.schedule.l)),
            k0: rows_of(&self.schedule.k.constant),
            k1: rows_of(&slope(&self.schedule.k)),
            objective: self.objective,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: CertificateFile = serde_json::from_str(s)?;
        Self::from_file_repr(&f)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_repr())?)
    }

    /// The gain set committed with the crate for the two-state example on `[1, 50]`.
    pub fn case_study() -> Self {
        Self::from_json_str(SHIPPED_CERTIFICATE).expect("shipped certificate parses")
    }

    pub fn n_x(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_phi(&self) -> usize {
        self.m.len()
    }

    pub fn check_dimensions(&self, system: &LureSystem) -> Result<()> {
        if self.n_x() != system.n_x() {
            return Err(config_err(format!("P is {}x{0}, plant has n_x = {}", self.n_x(), system.n_x())));
        }
        if self.n_phi() != system.n_phi() {
            return Err(config_err(format!("M has {} entries, plant has n_phi = {}", self.n_phi(), system.n_phi())));
        }
        self.schedule.check_against(system)
    }
}

/// Block offsets of the design matrix: `[x, x, phi, v, w]`.
fn block_offsets(system: &LureSystem) -> [usize; 6] {
    let (nx, nphi, nv, nw) = (system.n_x(), system.n_phi(), system.n_u(), system.n_y());
    [0, nx, 2 * nx, 2 * nx + nphi, 2 * nx + nphi + nv, 2 * nx + nphi + nv + nw]
}

pub fn assemble_design_matrix(cert: &Certificate, p: &[f64], p_hat: &[f64], system: &LureSystem) -> Result<Matrix> {
    cert.check_dimensions(system)?;
    let off = block_offsets(system);
    let dim = off[5];
    let nx = system.n_x();
    let nv = system.n_u();
    let nw = system.n_y();
    let mm = Matrix::from_diagonal(&cert.m);
    let lam_inv = Matrix::from_diagonal(&Vector::from_iterator(
        system.n_phi(),
        system.lipschitz.iter().map(|l| 1.0 / l),
    ));
    let l = cert.schedule.l_at(p_hat);
    let k = cert.schedule.k_at(p_hat);
    let a_cl = system.a_at(p_hat) + &l * &system.c;
    let h_cl = &system.h + &k * &system.c;
    let pm = &cert.p;

    let mut s = Matrix::zeros(dim, dim);
    let mut put = |bi: usize, bj: usize, block: Matrix| {
        s.view_mut((off[bi], off[bj]), block.shape()).copy_from(&block);
    };
    put(0, 0, -pm.clone());
    put(1, 0, -(a_cl.transpose() * pm));
    put(1, 1, Matrix::identity(nx, nx) * (cert.kappa_x / 2.0) - pm * 0.5);
    put(2, 0, -(system.g_at(p_hat).transpose() * pm));
    put(2, 1, &mm * &h_cl * 0.5);
    put(2, 2, -(&mm * &lam_inv));
    put(3, 0, system.b_at(p).transpose() * pm);
    put(3, 3, Matrix::identity(nv, nv) * (-cert.kappa_v / 2.0));
    put(4, 0, l.transpose() * pm);
    put(4, 2, -(k.transpose() * &mm) * 0.5);
    put(4, 4, Matrix::identity(nw, nw) * (-cert.kappa_w / 2.0));

    for i in 0..dim {
        for j in (i + 1)..dim {
            s[(i, j)] = s[(j, i)];
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NsdVerdict {
    Pass { max_eigenvalue: f64 },
    Fail { max_eigenvalue: f64 },
}

impl NsdVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, NsdVerdict::Pass { .. })
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match *self {
            NsdVerdict::Pass { max_eigenvalue } | NsdVerdict::Fail { max_eigenvalue } => max_eigenvalue,
        }
    }
}

pub fn symmetric_eigenvalues(s: &Matrix) -> Vector {
    SymmetricEigen::new(s.clone()).eigenvalues
}

fn max_eigenvalue(s: &Matrix) -> f64 {
    symmetric_eigenvalues(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_eigenvalue(s: &Matrix) -> f64 {
    symmetric_eigenvalues(s).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Passes iff `lambda_max(s) <= tol`.
pub fn check_nsd(s: &Matrix, tol: f64) -> Result<NsdVerdict> {
    if !s.is_square() {
        return Err(input_err(format!("matrix must be square, got {:?}", s.shape())));
    }
    let asym = (s - s.transpose()).amax();
    if asym > tol {
        return Err(input_err(format!("matrix is not symmetric (max |S - S'| = {asym:e})")));
    }
    let max_eigenvalue = max_eigenvalue(s);
    Ok(if max_eigenvalue <= tol {
        NsdVerdict::Pass { max_eigenvalue }
    } else {
        NsdVerdict::Fail { max_eigenvalue }
    })
}

/// Both sides of the Schur-complement bound `Q' P Q <= reduced`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchurReduction {
    /// Negated lower-right block of the design matrix.
    pub reduced: Matrix,
    /// `X P^-1 X'` with `X` the first block column below `-P`; equals `Q' P Q`.
    pub lifted: Matrix,
}

impl SchurReduction {
    /// `lambda_max(lifted - reduced)`; non-positive whenever the design matrix is NSD.
    pub fn gap(&self) -> f64 {
        let d = &self.lifted - &self.reduced;
        max_eigenvalue(&((&d + d.transpose()) * 0.5))
    }
}

/// Splits `s = [[-P, X'], [X, R]]` (with `P` of size `n_x`) and eliminates `-P`.
pub fn schur_reduce(s: &Matrix, n_x: usize) -> Result<SchurReduction> {
    if !s.is_square() || n_x == 0 || n_x >= s.nrows() {
        return Err(input_err(format!("cannot split a {:?} matrix at {n_x}", s.shape())));
    }
    let rest = s.nrows() - n_x;
    let p = -s.view((0, 0), (n_x, n_x)).into_owned();
    let x = s.view((n_x, 0), (rest, n_x)).into_owned();
    let r = s.view((n_x, n_x), (rest, rest)).into_owned();
    let chol = Cholesky::new(p).ok_or_else(|| input_err("P block is not positive definite"))?;
    let lifted = &x * chol.solve(&x.transpose());
    Ok(SchurReduction { reduced: -r, lifted })
}

/// `Q(p^, p) = [A(p^) + L(p^) C, G(p^), -B(p), -L(p^)]`, the linear part of the
/// error update acting on `(x~, delta z, v, w)`.
pub fn error_map(cert: &Certificate, p: &[f64], p_hat: &[f64], system: &LureSystem) -> Matrix {
    let nx = system.n_x();
    let off = block_offsets(system);
    let l = cert.schedule.l_at(p_hat);
    let mut q = Matrix::zeros(nx, off[5] - nx);
    q.view_mut((0, 0), (nx, nx)).copy_from(&(system.a_at(p_hat) + &l * &system.c));
    q.view_mut((0, off[2] - nx), (nx, system.n_phi())).copy_from(&system.g_at(p_hat));
    q.view_mut((0, off[3] - nx), (nx, system.n_u())).copy_from(&(-system.b_at(p)));
    q.view_mut((0, off[4] - nx), (nx, system.n_y())).copy_from(&(-l));
    q
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCheck {
    pub p: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub max_eigenvalue: f64,
    /// `lambda_max(Q' P Q - reduced)`, present when `P > 0`.
    pub schur_gap: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub passed: bool,
    pub tolerance: f64,
    pub p_min_eigenvalue: f64,
    pub p_max_eigenvalue: f64,
    pub p_positive_definite: bool,
    pub m_valid: bool,
    pub parameter_box: ParameterBox,
    pub vertex_checks: Vec<PairCheck>,
    pub audit_checks: Vec<PairCheck>,
    pub worst_max_eigenvalue: Option<f64>,
    pub objective: Option<f64>,
    pub failure: Option<String>,
}

impl CertificateReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "certificate check: {}", if self.passed { "PASS" } else { "FAIL" });
        let _ = writeln!(out, "parameter box: lower {:?} upper {:?}", self.parameter_box.lower, self.parameter_box.upper);
        let _ = writeln!(
            out,
            "P eigenvalues: min {:.6e} max {:.6e} ({})",
            self.p_min_eigenvalue,
            self.p_max_eigenvalue,
            if self.p_positive_definite { "positive definite" } else { "NOT positive definite" }
        );
        let _ = writeln!(out, "M diagonal positive: {}", self.m_valid);
        if let Some(obj) = self.objective {
            let _ = writeln!(out, "recorded objective kappa_v + 5 kappa_w: {obj:.6e}");
        }
        for (label, checks) in [("vertex", &self.vertex_checks), ("audit", &self.audit_checks)] {
            for c in checks.iter() {
                let _ = writeln!(
                    out,
                    "{label} p={:?} p_hat={:?} lambda_max={:.6e} schur_gap={} {}",
                    c.p,
                    c.p_hat,
                    c.max_eigenvalue,
                    c.schur_gap.map_or("n/a".to_string(), |g| format!("{g:.6e}")),
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "failure: {f}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub tolerance: f64,
    /// Additionally check every pair of an `n`-per-axis grid over the box.
    pub audit_grid: Option<usize>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { tolerance: NSD_TOLERANCE, audit_grid: None }
    }
}

/// Checks one `(p, p^)` pair; `with_schur` requires `P > 0`.
pub fn check_pair(
    cert: &Certificate,
    p: &[f64],
    p_hat: &[f64],
    system: &LureSystem,
    tol: f64,
    with_schur: bool,
) -> Result<PairCheck> {
    let s = assemble_design_matrix(cert, p, p_hat, system)?;
    let verdict = check_nsd(&s, tol)?;
    let schur_gap = if with_schur {
        Some(schur_reduce(&s, system.n_x())?.gap())
    } else {
        None
    };
    Ok(PairCheck {
        p: p.to_vec(),
        p_hat: p_hat.to_vec(),
        max_eigenvalue: verdict.max_eigenvalue(),
        schur_gap,
        pass: verdict.is_pass(),
    })
}

pub fn check_certificate(
    cert: &Certificate,
    bx: &ParameterBox,
    system: &LureSystem,
    options: CheckOptions,
) -> Result<CertificateReport> {
    cert.check_dimensions(system)?;
    if bx.dim() != system.n_p() {
        return Err(config_err(format!(
            "parameter box has dimension {}, plant has {} parameters",
            bx.dim(),
            system.n_p()
        )));
    }
    let tol = options.tolerance;
    let p_min = min_eigenvalue(&cert.p);
    let p_max = max_eigenvalue(&cert.p);
    let p_pd = p_max > 0.0 && p_min > PD_RELATIVE_TOLERANCE * p_max;
    let m_valid = cert.m.iter().all(|m| *m > 0.0 && m.is_finite());

    let mut report = CertificateReport {
        passed: false,
        tolerance: tol,
        p_min_eigenvalue: p_min,
        p_max_eigenvalue: p_max,
        p_positive_definite: p_pd,
        m_valid,
        parameter_box: bx.clone(),
        vertex_checks: Vec::new(),
        audit_checks: Vec::new(),
        worst_max_eigenvalue: None,
        objective: cert.objective,
        failure: None,
    };
    if !p_pd {
        report.failure = Some(format!("positivity: P is not positive definite (lambda_min = {p_min:e})"));
        return Ok(report);
    }
    if !m_valid {
        report.failure = Some("M must be diagonal with positive entries".into());
        return Ok(report);
    }

    let vertices = bx.vertices();
    for p in &vertices {
        for p_hat in &vertices {
            report.vertex_checks.push(check_pair(cert, p, p_hat, system, tol, true)?);
        }
    }
    if let Some(n) = options.audit_grid {
        let grid = grid_samples(bx, n)?;
        for p in &grid {
            for p_hat in &grid {
                report
                    .audit_checks
                    .push(check_pair(cert, p.as_slice(), p_hat.as_slice(), system, tol, true)?);
            }
        }
    }
    let all = report.vertex_checks.iter().chain(&report.audit_checks);
    report.worst_max_eigenvalue = all.clone().map(|c| c.max_eigenvalue).reduce(f64::max);
    report.failure = all
        .clone()
        .find(|c| !c.pass)
        .map(|c| format!("design matrix not NSD at p={:?}, p_hat={:?} (lambda_max = {:e})", c.p, c.p_hat, c.max_eigenvalue));
    report.passed = report.failure.is_none();
    Ok(report)
}
