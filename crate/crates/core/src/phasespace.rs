//! Phase-space value types, frozen Gaussians and observable descriptors.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HkError, Result};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    dim: usize,
    epsilon: f64,
}

impl SimConfig {
    pub fn new(dim: usize, epsilon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(HkError::InvalidArgument("dimension must be >= 1".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(HkError::InvalidArgument(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { dim, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseSpacePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        check_dim(q.len(), p.len())?;
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(HkError::InvalidArgument("phase-space point has non-finite entries".into()));
        }
        Ok(Self { q, p })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            q: vec![0.0; dim],
            p: vec![0.0; dim],
        }
    }

    pub fn uniform(dim: usize, q: f64, p: f64) -> Self {
        Self {
            q: vec![q; dim],
            p: vec![p; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Flattened (q, p) in ℝ^{2D}.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let d = v.len() / 2;
        Self {
            q: v[..d].to_vec(),
            p: v[d..2 * d].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublePhasePoint {
    pub y: PhaseSpacePoint,
    pub z: PhaseSpacePoint,
}

impl DoublePhasePoint {
    pub fn new(y: PhaseSpacePoint, z: PhaseSpacePoint) -> Result<Self> {
        check_dim(y.dim(), z.dim())?;
        Ok(Self { y, z })
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    /// Flattened w = (q_y, p_y, q_z, p_z) in ℝ^{4D}.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.y.to_vec();
        v.extend(self.z.to_vec());
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let h = v.len() / 2;
        Self {
            y: PhaseSpacePoint::from_slice(&v[..h]),
            z: PhaseSpacePoint::from_slice(&v[h..]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y.q.iter().chain(&self.y.p).chain(&self.z.q).chain(&self.z.p).all(|x| x.is_finite())
    }
}

/// Real symmetric positive-definite Γ. Diagonal matrices keep a fast path.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthMatrix {
    gamma: DMatrix<f64>,
    inverse: DMatrix<f64>,
    diag: Option<Vec<f64>>,
    det: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl WidthMatrix {
    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![1.0; dim]).expect("identity is SPD")
    }

    pub fn diagonal(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(HkError::InvalidArgument("width matrix must be non-empty".into()));
        }
        if let Some(bad) = entries.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(HkError::InvalidArgument(format!(
                "width matrix entries must be positive, got {bad}"
            )));
        }
        let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(entries.clone()));
        let inverse = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            entries.len(),
            entries.iter().map(|g| 1.0 / g),
        ));
        let det = entries.iter().product();
        Ok(Self {
            gamma,
            inverse,
            diag: Some(entries),
            det,
        })
    }

    pub fn full(gamma: DMatrix<f64>) -> Result<Self> {
        if !gamma.is_square() || gamma.nrows() == 0 {
            return Err(HkError::InvalidArgument("width matrix must be square and non-empty".into()));
        }
        let scale = gamma.amax().max(1.0);
        if (&gamma - gamma.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(HkError::InvalidArgument("width matrix must be symmetric".into()));
        }
        let eig = gamma.clone().symmetric_eigenvalues();
        if eig.iter().any(|l| l.is_nan() || *l <= 0.0) {
            return Err(HkError::InvalidArgument("width matrix must be positive-definite".into()));
        }
        let chol = gamma
            .clone()
            .cholesky()
            .ok_or_else(|| HkError::InvalidArgument("width matrix Cholesky failed".into()))?;
        let inverse = chol.inverse();
        let det = eig.iter().product();
        let is_diag = (0..gamma.nrows())
            .all(|i| (0..gamma.ncols()).all(|j| i == j || gamma[(i, j)] == 0.0));
        let diag = is_diag.then(|| gamma.diagonal().iter().copied().collect());
        Ok(Self {
            gamma,
            inverse,
            diag,
            det,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diag.is_some()
    }

    pub fn is_identity(&self) -> bool {
        self.diag.as_ref().is_some_and(|d| d.iter().all(|g| *g == 1.0))
    }

    pub fn diagonal_entries(&self) -> Option<&[f64]> {
        self.diag.as_deref()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// Γ_jj
    pub fn entry(&self, j: usize) -> f64 {
        self.gamma[(j, j)]
    }

    /// (Γ⁻¹)_jj
    pub fn inv_entry(&self, j: usize) -> f64 {
        self.inverse[(j, j)]
    }

    /// vᵀΓv
    pub fn quad(&self, v: &[f64]) -> f64 {
        quad_form(&self.gamma, self.diag.as_deref(), v, false)
    }

    /// vᵀΓ⁻¹v
    pub fn inv_quad(&self, v: &[f64]) -> f64 {
        quad_form(&self.inverse, self.diag.as_deref(), v, true)
    }

    /// uᵀΓ⁻¹v
    pub fn inv_bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        match &self.diag {
            Some(d) => u.iter().zip(v).zip(d).map(|((a, b), g)| a * b / g).sum(),
            None => bilinear(&self.inverse, u, v),
        }
    }

    /// out = Γv
    pub fn mul_into(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.gamma, self.diag.as_deref(), v, out, false)
    }

    /// out = Γ⁻¹v
    pub fn inv_mul_into(&self, v: &[f64], out: &mut [f64]) {
        mat_vec(&self.inverse, self.diag.as_deref(), v, out, true)
    }
}

fn quad_form(m: &DMatrix<f64>, diag: Option<&[f64]>, v: &[f64], inv: bool) -> f64 {
    match diag {
        Some(d) if inv => v.iter().zip(d).map(|(x, g)| x * x / g).sum(),
        Some(d) => v.iter().zip(d).map(|(x, g)| x * x * g).sum(),
        None => bilinear(m, v, v),
    }
}

fn bilinear(m: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let d = u.len();
    let mut s = 0.0;
    for j in 0..d {
        let mut row = 0.0;
        for k in 0..d {
            row += m[(j, k)] * v[k];
        }
        s += u[j] * row;
    }
    s
}

fn mat_vec(m: &DMatrix<f64>, diag: Option<&[f64]>, v: &[f64], out: &mut [f64], inv: bool) {
    match diag {
        Some(d) if inv => out.iter_mut().zip(v).zip(d).for_each(|((o, x), g)| *o = x / g),
        Some(d) => out.iter_mut().zip(v).zip(d).for_each(|((o, x), g)| *o = x * g),
        None => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = (0..v.len()).map(|k| m[(j, k)] * v[k]).sum();
            }
        }
    }
}

/// Σ₀ = diag(Γ, Γ⁻¹)
pub fn sigma0(width: &WidthMatrix) -> DMatrix<f64> {
    let d = width.dim();
    let mut s = DMatrix::zeros(2 * d, 2 * d);
    s.view_mut((0, 0), (d, d)).copy_from(width.matrix());
    s.view_mut((d, d), (d, d)).copy_from(width.inverse());
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianWavepacket {
    pub center: PhaseSpacePoint,
    pub width: WidthMatrix,
    pub config: SimConfig,
}

impl GaussianWavepacket {
    pub fn new(center: PhaseSpacePoint, width: WidthMatrix, config: SimConfig) -> Result<Self> {
        check_dim(config.dim(), center.dim())?;
        check_dim(config.dim(), width.dim())?;
        Ok(Self {
            center,
            width,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon()
    }
}

/// g_z(x) = (det Γ/(πε)^D)^{1/4} exp(−(x−q)ᵀΓ(x−q)/(2ε) + i pᵀ(x−q)/ε)
pub fn gaussian_eval(g: &GaussianWavepacket, x: &[f64]) -> Result<Complex64> {
    let d = g.dim();
    check_dim(d, x.len())?;
    let eps = g.epsilon();
    let dx: Vec<f64> = x.iter().zip(&g.center.q).map(|(a, b)| a - b).collect();
    let re = -g.width.quad(&dx) / (2.0 * eps);
    let im = g.center.p.iter().zip(&dx).map(|(p, v)| p * v).sum::<f64>() / eps;
    let norm = (g.width.det() / (std::f64::consts::PI * eps).powi(d as i32)).powf(0.25);
    Ok(norm * Complex64::new(re, im).exp())
}

/// Supported operators. Indices are 0-based; labels are 1-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    Identity,
    Position(usize),
    PositionSq(usize),
    Momentum(usize),
    MomentumSq(usize),
    Kinetic,
    PotentialHarmonic,
    PotentialHenonHeiles { sigma: f64 },
    TotalEnergy(Potential),
}

impl Observable {
    pub fn potential(potential: Potential) -> Self {
        match potential {
            Potential::Harmonic => Observable::PotentialHarmonic,
            Potential::HenonHeiles { sigma } => Observable::PotentialHenonHeiles { sigma },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Observable::Position(j)
            | Observable::PositionSq(j)
            | Observable::Momentum(j)
            | Observable::MomentumSq(j)
                if j >= dim =>
            {
                Err(HkError::InvalidArgument(format!(
                    "observable index {} out of range 1..={dim}",
                    j + 1
                )))
            }
            Observable::PotentialHenonHeiles { sigma } => {
                Potential::HenonHeiles { sigma }.validate()
            }
            Observable::TotalEnergy(p) => p.validate(),
            _ => Ok(()),
        }
    }

    /// Parses a label such as `Id`, `q1`, `p2^2`, `T`, `V`, `H`; `V` and `H` bind to `potential`.
    pub fn parse(label: &str, potential: Potential) -> Result<Self> {
        let bad = || HkError::InvalidArgument(format!("unknown observable `{label}`"));
        let s = label.trim();
        match s {
            "Id" => return Ok(Observable::Identity),
            "T" => return Ok(Observable::Kinetic),
            "V" => return Ok(Observable::potential(potential)),
            "H" => return Ok(Observable::TotalEnergy(potential)),
            _ => {}
        }
        let mut chars = s.chars();
        let head = chars.next().ok_or_else(bad)?;
        let rest = chars.as_str();
        let (idx, squared) = match rest.strip_suffix("^2") {
            Some(i) => (i, true),
            None => (rest, false),
        };
        let j: usize = idx.parse().map_err(|_| bad())?;
        if j == 0 {
            return Err(bad());
        }
        match (head, squared) {
            ('q', false) => Ok(Observable::Position(j - 1)),
            ('q', true) => Ok(Observable::PositionSq(j - 1)),
            ('p', false) => Ok(Observable::Momentum(j - 1)),
            ('p', true) => Ok(Observable::MomentumSq(j - 1)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Identity => write!(f, "Id"),
            Observable::Position(j) => write!(f, "q{}", j + 1),
            Observable::PositionSq(j) => write!(f, "q{}^2", j + 1),
            Observable::Momentum(j) => write!(f, "p{}", j + 1),
            Observable::MomentumSq(j) => write!(f, "p{}^2", j + 1),
            Observable::Kinetic => write!(f, "T"),
            Observable::PotentialHarmonic | Observable::PotentialHenonHeiles { .. } => write!(f, "V"),
            Observable::TotalEnergy(_) => write!(f, "H"),
        }
    }
}
