//! Deterministic model objects: steering vectors, coupling matrices, the
//! coupling-to-steering swap matrices (`C·a(θ) = Q(θ)·c`), and the off-grid
//! dictionary built from them.
//!
//! Public angles are in degrees. Every derivative (and therefore `Ξ` and the
//! offsets inside the solver) is taken with respect to radians; offsets are
//! converted at the `Υ(ν)` assembly boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kron, toeplitz_symmetric, CMatrix, CVector, C64, ONE, ZERO};

/// Geometry of the colocated MIMO array. Spacings are in wavelengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub m_tx: usize,
    pub n_rx: usize,
    pub d_tx: f64,
    pub d_rx: f64,
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_tx < 2 || self.n_rx < 2 {
            return Err(Error::InvalidConfig(format!(
                "array needs at least 2 transmit and 2 receive antennas, got M={} N={}",
                self.m_tx, self.n_rx
            )));
        }
        if !(self.d_tx > 0.0 && self.d_rx > 0.0) {
            return Err(Error::InvalidConfig("antenna spacings must be positive".into()));
        }
        Ok(())
    }

    /// Number of virtual elements `M·N`.
    pub fn virtual_len(&self) -> usize {
        self.m_tx * self.n_rx
    }
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { m_tx: 10, n_rx: 5, d_tx: 0.5, d_rx: 0.5 }
    }
}

/// Uniform angle grid descriptor as it appears in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub min_deg: f64,
    pub max_deg: f64,
    pub step_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { min_deg: -80.0, max_deg: 80.0, step_deg: 2.0 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::uniform(self.min_deg, self.max_deg, self.step_deg)
    }
}

/// Discretized detection range `ζ_0 < … < ζ_{U−1}` with constant step `δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    angles_deg: Vec<f64>,
    step_deg: f64,
}

impl Grid {
    pub fn new(angles_deg: Vec<f64>, step_deg: f64) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::InvalidConfig("grid is empty".into()));
        }
        if !(step_deg > 0.0) {
            return Err(Error::InvalidConfig(format!("grid step must be positive, got {step_deg}")));
        }
        if angles_deg.iter().any(|a| !(a.abs() < 90.0)) {
            return Err(Error::InvalidConfig("grid angles must lie inside (-90, 90) degrees".into()));
        }
        if angles_deg.windows(2).any(|w| ((w[1] - w[0]) - step_deg).abs() > 1e-9) {
            return Err(Error::InvalidConfig("grid spacing is not uniform".into()));
        }
        Ok(Self { angles_deg, step_deg })
    }

    /// Largest uniform grid with step `step_deg` fitting in `[min_deg, max_deg]`,
    /// centred in the range. Both endpoints are hit when the span is a multiple of the step.
    pub fn uniform(min_deg: f64, max_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) || !(max_deg > min_deg) {
            return Err(Error::InvalidConfig(format!(
                "grid range [{min_deg}, {max_deg}] with step {step_deg} is empty"
            )));
        }
        let span = max_deg - min_deg;
        let intervals = (span / step_deg + 1e-9).floor() as usize;
        let offset = (span - intervals as f64 * step_deg) / 2.0;
        let angles = (0..=intervals).map(|i| min_deg + offset + i as f64 * step_deg).collect();
        Self::new(angles, step_deg)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn step_deg(&self) -> f64 {
        self.step_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    pub fn min_deg(&self) -> f64 {
        self.angles_deg[0]
    }

    pub fn max_deg(&self) -> f64 {
        self.angles_deg[self.angles_deg.len() - 1]
    }
}

/// ULA steering vector `[exp(j2π·m·spacing·sin θ)]_m`.
pub fn steering(theta_deg: f64, size: usize, spacing: f64) -> CVector {
    let phase = 2.0 * PI * spacing * theta_deg.to_radians().sin();
    (0..size).map(|m| C64::from_polar(1.0, phase * m as f64)).collect()
}

/// Angle derivative (per radian) of [`steering`].
pub fn steering_deriv(theta_deg: f64, size: usize, spacing: f64) -> CVector {
    let theta = theta_deg.to_radians();
    let phase = 2.0 * PI * spacing * theta.sin();
    let rate = 2.0 * PI * spacing * theta.cos();
    (0..size)
        .map(|m| C64::new(0.0, rate * m as f64) * C64::from_polar(1.0, phase * m as f64))
        .collect()
}

pub fn steering_tx(theta_deg: f64, cfg: &ArrayConfig) -> CVector {
    steering(theta_deg, cfg.m_tx, cfg.d_tx)
}

pub fn steering_rx(theta_deg: f64, cfg: &ArrayConfig) -> CVector {
    steering(theta_deg, cfg.n_rx, cfg.d_rx)
}

/// Virtual steering vector `b(θ) ⊗ a(θ)`.
pub fn steering_virtual(theta_deg: f64, cfg: &ArrayConfig) -> CVector {
    steering_rx(theta_deg, cfg).kron(&steering_tx(theta_deg, cfg))
}

/// Symmetric Toeplitz coupling matrix with first row `c`; requires `c[0] = 1`.
pub fn coupling_matrix(c: &CVector) -> Result<CMatrix> {
    if c.is_empty() || c[0] != ONE {
        let head = if c.is_empty() { "an empty vector".to_string() } else { format!("{}", c[0]) };
        return Err(Error::InvalidCoupling(head));
    }
    Ok(toeplitz_symmetric(c))
}

/// `Q = Q₁ + Q₂` built from an arbitrary first row `v`:
/// `Q₁(p,q) = v[p+q]` for `p+q < n`, `Q₂(p,q) = v[p−q]` for `p ≥ q ≥ 1`.
fn swap_matrix(v: &CVector) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |p, q| {
        let mut z = ZERO;
        if p + q < n {
            z += v[p + q];
        }
        if q >= 1 && p >= q {
            z += v[p - q];
        }
        z
    })
}

/// Matrix `Q(θ)` with `toeplitz(c)·a(θ) = Q(θ)·c` for every first row `c`.
pub fn q_matrix(theta_deg: f64, size: usize, spacing: f64) -> CMatrix {
    assert!(size >= 2, "q_matrix: size must be at least 2");
    swap_matrix(&steering(theta_deg, size, spacing))
}

/// Derivative of [`q_matrix`] with respect to the angle in radians.
pub fn q_matrix_deriv(theta_deg: f64, size: usize, spacing: f64) -> CMatrix {
    assert!(size >= 2, "q_matrix_deriv: size must be at least 2");
    swap_matrix(&steering_deriv(theta_deg, size, spacing))
}

/// `Φ(ζ) = Q_b(ζ) ⊗ Q_a(ζ)`, shape `MN × MN`.
pub fn phi(zeta_deg: f64, cfg: &ArrayConfig) -> CMatrix {
    kron(&q_matrix(zeta_deg, cfg.n_rx, cfg.d_rx), &q_matrix(zeta_deg, cfg.m_tx, cfg.d_tx))
}

/// `Ω(ζ) = Q_b ⊗ Q_a′ + Q_b′ ⊗ Q_a`, the radian derivative of [`phi`].
pub fn omega(zeta_deg: f64, cfg: &ArrayConfig) -> CMatrix {
    let qa = q_matrix(zeta_deg, cfg.m_tx, cfg.d_tx);
    let qb = q_matrix(zeta_deg, cfg.n_rx, cfg.d_rx);
    let qa_d = q_matrix_deriv(zeta_deg, cfg.m_tx, cfg.d_tx);
    let qb_d = q_matrix_deriv(zeta_deg, cfg.n_rx, cfg.d_rx);
    kron(&qb, &qa_d).add(&kron(&qb_d, &qa))
}

/// Per-grid-point Kronecker factors of `Φ` and `Ω`.
#[derive(Clone, Debug)]
struct AtomFactors {
    qa: CMatrix,
    qa_d: CMatrix,
    qb: CMatrix,
    qb_d: CMatrix,
}

/// Off-grid dictionary: `Ψ = [Φ(ζ_0), …]`, `Ξ = [Ω(ζ_0), …]`, both `MN × U·MN`.
///
/// The Kronecker factors are kept next to the dense blocks so the estimator can
/// form `Φ(ζ_u)·(c_R ⊗ c_T) = (Q_b c_R) ⊗ (Q_a c_T)` without touching the dense blocks.
#[derive(Clone, Debug)]
pub struct Dictionary {
    psi: CMatrix,
    xi: CMatrix,
    grid: Grid,
    array: ArrayConfig,
    factors: Vec<AtomFactors>,
}

/// Dictionary atoms contracted with a coupling vector: column `u` of `psi_c`
/// is `Φ(ζ_u)·c`, column `u` of `xi_c` is `Ω(ζ_u)·c`.
#[derive(Clone, Debug)]
pub struct CoupledAtoms {
    pub psi_c: CMatrix,
    pub xi_c: CMatrix,
}

impl CoupledAtoms {
    /// `Υ(ν)·(I_U ⊗ c)` with offsets in radians.
    pub fn combine(&self, nu_rad: &[f64]) -> CMatrix {
        let mut a = self.psi_c.clone();
        let cols = a.cols();
        assert_eq!(nu_rad.len(), cols);
        for i in 0..a.rows() {
            let xi_row = self.xi_c.row(i);
            for ((z, x), &nu) in a.row_mut(i).iter_mut().zip(xi_row).zip(nu_rad) {
                *z += x * nu;
            }
        }
        a
    }
}

pub fn build_dictionary(grid: &Grid, cfg: &ArrayConfig) -> Result<Dictionary> {
    cfg.validate()?;
    let mn = cfg.virtual_len();
    let u_len = grid.len();
    let mut psi = CMatrix::zeros(mn, u_len * mn);
    let mut xi = CMatrix::zeros(mn, u_len * mn);
    let mut factors = Vec::with_capacity(u_len);
    for (u, &zeta) in grid.angles_deg().iter().enumerate() {
        let f = AtomFactors {
            qa: q_matrix(zeta, cfg.m_tx, cfg.d_tx),
            qa_d: q_matrix_deriv(zeta, cfg.m_tx, cfg.d_tx),
            qb: q_matrix(zeta, cfg.n_rx, cfg.d_rx),
            qb_d: q_matrix_deriv(zeta, cfg.n_rx, cfg.d_rx),
        };
        let phi_u = kron(&f.qb, &f.qa);
        let omega_u = kron(&f.qb, &f.qa_d).add(&kron(&f.qb_d, &f.qa));
        for i in 0..mn {
            psi.row_mut(i)[u * mn..(u + 1) * mn].copy_from_slice(phi_u.row(i));
            xi.row_mut(i)[u * mn..(u + 1) * mn].copy_from_slice(omega_u.row(i));
        }
        factors.push(f);
    }
    Ok(Dictionary { psi, xi, grid: grid.clone(), array: *cfg, factors })
}

impl Dictionary {
    pub fn psi(&self) -> &CMatrix {
        &self.psi
    }

    pub fn xi(&self) -> &CMatrix {
        &self.xi
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn array(&self) -> &ArrayConfig {
        &self.array
    }

    /// Number of grid points `U`.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn block(m: &CMatrix, u: usize) -> CMatrix {
        let mn = m.rows();
        CMatrix::from_fn(mn, mn, |i, j| m[(i, u * mn + j)])
    }

    pub fn psi_block(&self, u: usize) -> CMatrix {
        Self::block(&self.psi, u)
    }

    pub fn xi_block(&self, u: usize) -> CMatrix {
        Self::block(&self.xi, u)
    }

    /// Contract every atom with `c = c_rx ⊗ c_tx`.
    pub fn coupled_atoms(&self, c_tx: &CVector, c_rx: &CVector) -> CoupledAtoms {
        let mn = self.array.virtual_len();
        let u_len = self.len();
        let mut psi_c = CMatrix::zeros(mn, u_len);
        let mut xi_c = CMatrix::zeros(mn, u_len);
        for (u, f) in self.factors.iter().enumerate() {
            let ha = f.qa.mul_vec(c_tx);
            let ha_d = f.qa_d.mul_vec(c_tx);
            let hb = f.qb.mul_vec(c_rx);
            let hb_d = f.qb_d.mul_vec(c_rx);
            for (n, (b, b_d)) in hb.iter().zip(hb_d.iter()).enumerate() {
                for (m, (a, a_d)) in ha.iter().zip(ha_d.iter()).enumerate() {
                    let i = n * ha.len() + m;
                    psi_c[(i, u)] = b * a;
                    xi_c[(i, u)] = b * a_d + b_d * a;
                }
            }
        }
        CoupledAtoms { psi_c, xi_c }
    }

    /// Blocks `Υ_u(ν)·(c_rx ⊗ I_M)`, each `MN × M`; the map `c_tx ↦ Υ_u(ν)·c`.
    pub fn tx_blocks(&self, c_rx: &CVector, nu_rad: &[f64]) -> Vec<CMatrix> {
        let (m_len, n_len) = (self.array.m_tx, self.array.n_rx);
        self.factors
            .iter()
            .zip(nu_rad)
            .map(|(f, &nu)| {
                let g = f.qb.mul_vec(c_rx);
                let g_d = f.qb_d.mul_vec(c_rx);
                CMatrix::from_fn(m_len * n_len, m_len, |row, col| {
                    let (n, i) = (row / m_len, row % m_len);
                    g[n] * (f.qa[(i, col)] + f.qa_d[(i, col)] * nu) + g_d[n] * f.qa[(i, col)] * nu
                })
            })
            .collect()
    }

    /// Blocks `Υ_u(ν)·(I_N ⊗ c_tx)`, each `MN × N`; the map `c_rx ↦ Υ_u(ν)·c`.
    pub fn rx_blocks(&self, c_tx: &CVector, nu_rad: &[f64]) -> Vec<CMatrix> {
        let (m_len, n_len) = (self.array.m_tx, self.array.n_rx);
        self.factors
            .iter()
            .zip(nu_rad)
            .map(|(f, &nu)| {
                let h = f.qa.mul_vec(c_tx);
                let h_d = f.qa_d.mul_vec(c_tx);
                CMatrix::from_fn(m_len * n_len, n_len, |row, col| {
                    let (n, i) = (row / m_len, row % m_len);
                    (f.qb[(n, col)] + f.qb_d[(n, col)] * nu) * h[i] + f.qb[(n, col)] * h_d[i] * nu
                })
            })
            .collect()
    }
}

/// `Υ(ν) = Ψ + Ξ(diag{ν} ⊗ I_MN)` with `ν` given in degrees.
pub fn upsilon(dict: &Dictionary, nu_deg: &[f64]) -> Result<CMatrix> {
    let u_len = dict.len();
    if nu_deg.len() != u_len {
        return Err(Error::Dimension(format!("{} offsets for a {u_len}-point grid", nu_deg.len())));
    }
    let half = dict.grid.step_deg() / 2.0;
    if let Some((index, &offset_deg)) = nu_deg.iter().enumerate().find(|(_, v)| !(v.abs() <= half + 1e-12)) {
        return Err(Error::OffsetOutOfRange { index, offset_deg, half_step_deg: half });
    }
    let mn = dict.array.virtual_len();
    let mut out = dict.psi.clone();
    for (u, nu) in nu_deg.iter().enumerate() {
        let nu = nu.to_radians();
        if nu == 0.0 {
            continue;
        }
        for i in 0..mn {
            let src = &dict.xi.row(i)[u * mn..(u + 1) * mn];
            for (d, s) in out.row_mut(i)[u * mn..(u + 1) * mn].iter_mut().zip(src) {
                *d += s * nu;
            }
        }
    }
    Ok(out)
}
