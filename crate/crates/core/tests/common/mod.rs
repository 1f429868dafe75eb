#![allow(dead_code)]

use coupled_doa::array_model::{omega, phi, ArrayConfig, Dictionary};
use coupled_doa::estimators::{init_state, Hyper, SblmcState};
use coupled_doa::numerics::{CMatrix, CVector, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn cnum(rng: &mut impl Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn cmat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cnum(rng))
}

pub fn cvec(rng: &mut impl Rng, len: usize) -> CVector {
    CVector::from_vec((0..len).map(|_| cnum(rng)).collect())
}

/// Random coupling vector with unit head and entries of magnitude below `scale`.
pub fn coupling(rng: &mut impl Rng, len: usize, scale: f64) -> CVector {
    let mut c = cvec(rng, len).scale(C64::new(scale, 0.0));
    c[0] = C64::new(1.0, 0.0);
    c
}

/// Random Hermitian positive definite matrix.
pub fn hpd(rng: &mut impl Rng, n: usize) -> CMatrix {
    let b = cmat(rng, n, n);
    let mut s = b.matmul(&b.adjoint()).scale(C64::new(0.1, 0.0));
    for i in 0..n {
        s[(i, i)] += 0.05;
    }
    s
}

/// `[[Re, −Im], [Im, Re]]`.
pub fn real_embed(a: &CMatrix) -> DMatrix<f64> {
    let (m, n) = a.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = a[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn real_stack(v: &CVector) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(2 * n, 1, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn unstack(x: &DMatrix<f64>) -> CVector {
    let n = x.nrows() / 2;
    CVector::from_vec((0..n).map(|i| C64::new(x[(i, 0)], x[(i + n, 0)])).collect())
}

/// Minimizer of `α‖r − A x‖² + xᴴ diag(β) x` per column of `r`, by real normal equations.
pub fn ridge_oracle(a: &CMatrix, r: &CMatrix, beta: &[f64], alpha: f64) -> CMatrix {
    let ar = real_embed(a);
    let u = a.cols();
    let mut lhs = ar.transpose() * &ar * alpha;
    for i in 0..u {
        lhs[(i, i)] += beta[i];
        lhs[(i + u, i + u)] += beta[i];
    }
    let chol = lhs.cholesky().expect("ridge system is positive definite");
    let mut out = CMatrix::zeros(u, r.cols());
    for p in 0..r.cols() {
        let rhs = ar.transpose() * real_stack(&r.column(p)) * alpha;
        out.set_column(p, &unstack(&chol.solve(&rhs)));
    }
    out
}

/// `Σ = (α AᴴA + diag β)⁻¹` through the real embedding.
pub fn covariance_oracle(a: &CMatrix, beta: &[f64], alpha: f64) -> CMatrix {
    let ar = real_embed(a);
    let u = a.cols();
    let mut lhs = ar.transpose() * &ar * alpha;
    for i in 0..u {
        lhs[(i, i)] += beta[i];
        lhs[(i + u, i + u)] += beta[i];
    }
    let inv = lhs.try_inverse().expect("invertible");
    // inverse of [[X, −Y], [Y, X]] is [[P, −Q], [Q, P]] with Σ = P + jQ
    CMatrix::from_fn(u, u, |i, j| C64::new(inv[(i, j)], inv[(i + u, j)]))
}

/// `Υ(ν)` assembled directly from per-angle `Φ` and `Ω` (degrees in, derivative per radian).
pub fn literal_upsilon(dict: &Dictionary, nu_deg: &[f64]) -> CMatrix {
    let cfg = dict.array();
    let mn = cfg.virtual_len();
    let u_len = dict.len();
    let mut out = CMatrix::zeros(mn, u_len * mn);
    for (u, (&zeta, &nu)) in dict.grid().angles_deg().iter().zip(nu_deg).enumerate() {
        let block = phi(zeta, cfg).add(&omega(zeta, cfg).scale(C64::new(nu.to_radians(), 0.0)));
        for i in 0..mn {
            for j in 0..mn {
                out[(i, u * mn + j)] = block[(i, j)];
            }
        }
    }
    out
}

/// Explicit `I_n ⊗ B`-style Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn column_vector(v: &CVector) -> CMatrix {
    v.to_column()
}

/// A random but well-posed estimator state with matching data.
pub fn random_state(dict: &Dictionary, pulses: usize, rng: &mut impl Rng) -> (SblmcState, CMatrix) {
    let cfg: &ArrayConfig = dict.array();
    let u_len = dict.len();
    let half = dict.grid().step_deg() / 2.0;
    let mut st = init_state(dict, &Hyper::default(), pulses);
    st.mu = cmat(rng, u_len, pulses);
    st.sigma_x = hpd(rng, u_len);
    st.beta = (0..u_len).map(|_| rng.gen_range(0.5..5.0)).collect();
    st.alpha_n = rng.gen_range(0.5..20.0);
    st.c_tx = coupling(rng, cfg.m_tx, 0.4);
    st.c_rx = coupling(rng, cfg.n_rx, 0.4);
    st.vartheta_tx = (0..cfg.m_tx).map(|_| rng.gen_range(0.01..2.0)).collect();
    st.vartheta_rx = (0..cfg.n_rx).map(|_| rng.gen_range(0.01..2.0)).collect();
    st.nu_deg = (0..u_len).map(|_| rng.gen_range(-half..half)).collect();
    let r = cmat(rng, cfg.virtual_len(), pulses);
    (st, r)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Ξ` assembled from per-angle `Ω` blocks.
pub fn literal_xi(dict: &Dictionary) -> CMatrix {
    let cfg = dict.array();
    let mn = cfg.virtual_len();
    let mut out = CMatrix::zeros(mn, dict.len() * mn);
    for (u, &zeta) in dict.grid().angles_deg().iter().enumerate() {
        let block = omega(zeta, cfg);
        for i in 0..mn {
            for j in 0..mn {
                out[(i, u * mn + j)] = block[(i, j)];
            }
        }
    }
    out
}

/// `M × (U·MN)`-style selector `I_U ⊗ c` as a dense matrix.
pub fn lift(u_len: usize, c: &CVector) -> CMatrix {
    kron(&CMatrix::identity(u_len), &c.to_column())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Tx,
    Rx,
}

/// `G(x)` with `Υ (x ⊗ c) = Υ G(x) c_side`.
fn coupling_map(x: &CVector, st: &SblmcState, side: Side) -> CMatrix {
    let x = x.to_column();
    match side {
        Side::Tx => kron(&kron(&x, &st.c_rx.to_column()), &CMatrix::identity(st.c_tx.len())),
        Side::Rx => kron(&kron(&x, &CMatrix::identity(st.c_rx.len())), &st.c_tx.to_column()),
    }
}

/// Gradient (w.r.t. the conjugate) of the expected coupling objective at `c`,
/// plus the data-only right-hand side used to scale it.
pub fn coupling_gradient(dict: &Dictionary, st: &SblmcState, r: &CMatrix, c: &CVector, side: Side) -> (CVector, CVector) {
    let ups = literal_upsilon(dict, &st.nu_deg);
    let u_len = dict.len();
    let p_len = r.cols();
    let alpha = C64::new(st.alpha_n, 0.0);
    let l = c.len();
    let mut grad = CVector::zeros(l);
    let mut rhs = CVector::zeros(l);
    for p in 0..p_len {
        let m_p = ups.matmul(&coupling_map(&st.mu.column(p), st, side));
        let resid = m_p.mul_vec(c).sub(&r.column(p));
        grad = grad.add(&m_p.adjoint().mul_vec(&resid).scale(alpha));
        rhs = rhs.add(&m_p.adjoint().mul_vec(&r.column(p)).scale(alpha));
    }
    let w = ups.adjoint_matmul(&ups);
    let g: Vec<CMatrix> = (0..u_len).map(|u| coupling_map(&CVector::unit(u_len, u), st, side)).collect();
    let wg: Vec<CVector> = g.iter().map(|gk| w.matmul(gk).mul_vec(c)).collect();
    for u in 0..u_len {
        for k in 0..u_len {
            let coef = st.sigma_x[(k, u)] * (p_len as f64) * alpha;
            grad = grad.add(&g[u].adjoint().mul_vec(&wg[k]).scale(coef));
        }
    }
    let theta = match side {
        Side::Tx => &st.vartheta_tx,
        Side::Rx => &st.vartheta_rx,
    };
    for m in 0..l {
        grad[m] += c[m] * theta[m];
    }
    (grad, rhs)
}

/// Offset stationarity residual on `active` at `nu_rad` (zero outside `active`),
/// together with its `ν = 0` right-hand side.
pub fn offset_residual(
    dict: &Dictionary,
    st: &SblmcState,
    r: &CMatrix,
    active: &[usize],
    nu_rad: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let u_len = dict.len();
    let c = st.c_rx.kron(&st.c_tx);
    let lifted = lift(u_len, &c);
    let psi_c = literal_upsilon(dict, &vec![0.0; u_len]).matmul(&lifted);
    let xi_c = literal_xi(dict).matmul(&lifted);
    let mut d = vec![0.0; u_len];
    for (&u, &v) in active.iter().zip(nu_rad) {
        d[u] = v;
    }
    let xi_d = CMatrix::from_fn(xi_c.rows(), u_len, |i, m| xi_c[(i, m)] * d[m]);
    let model = psi_c.add(&xi_d);
    let mut resid = Vec::new();
    let mut rhs = Vec::new();
    for &u in active {
        let xi_u = xi_c.column(u);
        let sig_u = st.sigma_x.column(u);
        let (mut g, mut z) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for p in 0..r.cols() {
            let mu_p = st.mu.column(p);
            let mbar = st.mu[(u, p)].conj();
            let second = mu_p.scale(mbar).add(&sig_u);
            let data = r.column(p).scale(mbar);
            g += xi_u.dot(&data.sub(&model.mul_vec(&second)));
            z += xi_u.dot(&data.sub(&psi_c.mul_vec(&second)));
        }
        resid.push(g.re);
        rhs.push(z.re);
    }
    (resid, rhs)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn truth_state(d: &Dictionary, x: &CMatrix, c_tx: &CVector, c_rx: &CVector, nu_deg: Vec<f64>) -> SblmcState {
    let mut st = init_state(d, &Hyper::default(), x.cols());
    st.mu = x.clone();
    st.sigma_x = CMatrix::zeros(d.len(), d.len());
    st.alpha_n = 1e10;
    st.c_tx = c_tx.clone();
    st.c_rx = c_rx.clone();
    st.nu_deg = nu_deg;
    st
}

/// Noiseless data for targets at `ζ_u + ν_u` with amplitudes `x`.
pub fn forward(d: &Dictionary, x: &CMatrix, c: &CVector, nu_deg: &[f64]) -> CMatrix {
    let mn = d.array().virtual_len();
    let mut r = CMatrix::zeros(mn, x.cols());
    for u in 0..d.len() {
        let atom = phi(d.grid().angles_deg()[u] + nu_deg[u], d.array()).mul_vec(c);
        for p in 0..x.cols() {
            for i in 0..mn {
                r[(i, p)] += atom[i] * x[(u, p)];
            }
        }
    }
    r
}
