//! EM estimator for the sparse scattering matrix, grid offsets, mutual coupling
//! and all precision hyperparameters, plus its frozen-parameter baselines.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::array_model::Dictionary;
use crate::error::{Error, Result};
use crate::estimators::peak_pick;
use crate::numerics::{CMatrix, CVector, Lu, C64, ZERO};

/// Gamma-prior hyperparameters and stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e1: f64,
    pub f1: f64,
    pub e2: f64,
    pub f2: f64,
    pub n_iter_max: usize,
    pub lambda_th: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            a: 1e-2,
            b: 1e-2,
            c: 1e-2,
            d: 1e-2,
            e1: 1e-2,
            f1: 1e-2,
            e2: 1e-2,
            f2: 1e-2,
            n_iter_max: 1000,
            lambda_th: 1e-3,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.d, self.e1, self.f1, self.e2, self.f2, self.lambda_th];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("hyperparameters and lambda_th must be positive".into()));
        }
        if self.n_iter_max == 0 {
            return Err(Error::InvalidConfig("n_iter_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which parameters the EM loop is allowed to move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Offsets and coupling both estimated.
    Full,
    /// Coupling frozen at identity; offsets estimated.
    NoCoupling,
    /// Coupling frozen at identity and offsets frozen at zero.
    OnGrid,
}

impl Mode {
    pub fn method_name(self) -> &'static str {
        match self {
            Mode::Full => "sblmc",
            Mode::NoCoupling => "ogsbi",
            Mode::OnGrid => "bcs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SblmcState {
    /// `U × P` posterior mean, column `p` is `μ_p`.
    pub mu: CMatrix,
    /// `U × U` posterior covariance, shared by all pulses.
    pub sigma_x: CMatrix,
    pub beta: Vec<f64>,
    pub alpha_n: f64,
    pub c_tx: CVector,
    pub c_rx: CVector,
    pub vartheta_tx: Vec<f64>,
    pub vartheta_rx: Vec<f64>,
    pub nu_deg: Vec<f64>,
    pub iter: usize,
    /// Relative change of `β` over the last iteration; unset before the second iteration.
    pub lambda: Option<f64>,
}

impl SblmcState {
    pub fn pulses(&self) -> usize {
        self.mu.cols()
    }

    /// `c = c_rx ⊗ c_tx`.
    pub fn coupling(&self) -> CVector {
        self.c_rx.kron(&self.c_tx)
    }

    fn nu_rad(&self) -> Vec<f64> {
        self.nu_deg.iter().map(|v| v.to_radians()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    pub spectrum: Vec<f64>,
    /// Angles the spectrum is reported on, `ζ + ν`.
    pub angles_deg: Vec<f64>,
    pub doas_deg: Vec<f64>,
    pub state: Option<SblmcState>,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
    pub warnings: Vec<String>,
}

fn precision_init(hyper_e: f64, hyper_f: f64, len: usize) -> Vec<f64> {
    (0..len).map(|m| if m == 0 { hyper_e / (hyper_f + 1.0) } else { hyper_e / hyper_f }).collect()
}

/// Starting point: no coupling, no offsets, unit precisions, prior-only posterior.
pub fn init_state(dict: &Dictionary, hyper: &Hyper, pulses: usize) -> SblmcState {
    let u_len = dict.len();
    let array = dict.array();
    SblmcState {
        mu: CMatrix::zeros(u_len, pulses),
        sigma_x: CMatrix::identity(u_len),
        beta: vec![1.0; u_len],
        alpha_n: 1.0,
        c_tx: CVector::unit(array.m_tx, 0),
        c_rx: CVector::unit(array.n_rx, 0),
        vartheta_tx: precision_init(hyper.e1, hyper.f1, array.m_tx),
        vartheta_rx: precision_init(hyper.e2, hyper.f2, array.n_rx),
        nu_deg: vec![0.0; u_len],
        iter: 1,
        lambda: None,
    }
}

/// Effective dictionary `A = Υ(ν)(I_U ⊗ c)`, shape `MN × U`.
pub fn effective_dictionary(dict: &Dictionary, state: &SblmcState) -> CMatrix {
    dict.coupled_atoms(&state.c_tx, &state.c_rx).combine(&state.nu_rad())
}

fn check_data(dict: &Dictionary, state: &SblmcState, r: &CMatrix) -> Result<()> {
    let mn = dict.array().virtual_len();
    if r.rows() != mn || r.cols() != state.pulses() {
        return Err(Error::Dimension(format!(
            "data is {}x{}, expected {mn}x{}",
            r.rows(),
            r.cols(),
            state.pulses()
        )));
    }
    if state.beta.len() != dict.len() || state.nu_deg.len() != dict.len() {
        return Err(Error::Dimension("state does not match the dictionary grid".into()));
    }
    Ok(())
}

/// Posterior of `X` given `A`, its Gram matrix and the data.
pub fn posterior_from(
    a: &CMatrix,
    gram: &CMatrix,
    r: &CMatrix,
    beta: &[f64],
    alpha_n: f64,
) -> Result<(CMatrix, CMatrix)> {
    let mut precision = gram.scale(C64::new(alpha_n, 0.0));
    for (u, b) in beta.iter().enumerate() {
        precision[(u, u)] += b;
    }
    let mut sigma = Lu::factor(&precision)?.inverse();
    sigma.hermitize();
    let mu = sigma.matmul(&a.adjoint_matmul(r)).scale(C64::new(alpha_n, 0.0));
    Ok((mu, sigma))
}

/// `(μ, Σ_X)` for the current state.
pub fn posterior_update(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    check_data(dict, state, r)?;
    let a = effective_dictionary(dict, state);
    let gram = a.adjoint_matmul(&a);
    posterior_from(&a, &gram, r, &state.beta, state.alpha_n)
}

/// Spatial spectrum `P_X(u) = Re Σ_X(u,u) + (1/P)·Σ_p |μ_{u,p}|²`.
pub fn spectrum(state: &SblmcState) -> Vec<f64> {
    let p = state.pulses() as f64;
    (0..state.mu.rows())
        .map(|u| {
            let energy: f64 = state.mu.row(u).iter().map(|z| z.norm_sqr()).sum();
            state.sigma_x[(u, u)].re + energy / p
        })
        .collect()
}

pub fn update_beta(state: &SblmcState, hyper: &Hyper) -> Vec<f64> {
    let p = state.pulses() as f64;
    (0..state.mu.rows())
        .map(|u| {
            let energy: f64 = state.mu.row(u).iter().map(|z| z.norm_sqr()).sum();
            (p + hyper.c - 1.0) / (hyper.d + p * state.sigma_x[(u, u)].re + energy)
        })
        .collect()
}

/// Second-moment matrix `S(u,k) = Σ_p E[x̄_{u,p} x_{k,p}] = Σ_p μ̄_{u,p} μ_{k,p} + P·Σ_X(k,u)`.
pub fn second_moment(state: &SblmcState) -> CMatrix {
    let p = state.pulses() as f64;
    let mut s = state.mu.conj().matmul(&state.mu.transpose());
    let u_len = s.rows();
    for u in 0..u_len {
        for k in 0..u_len {
            s[(u, k)] += state.sigma_x[(k, u)] * p;
        }
    }
    s
}

/// Posterior statistics shared by the coupling and offset updates of one iteration.
struct Moments {
    s: CMatrix,
    /// Row `u` is `Σ_p μ̄_{u,p} r_p`.
    y: CMatrix,
}

impl Moments {
    fn new(state: &SblmcState, r: &CMatrix) -> Self {
        Self { s: second_moment(state), y: state.mu.conj().matmul(&r.transpose()) }
    }
}

/// Normal equations `H·c = z` for one coupling factor, given the linear maps
/// `B_u` (each `MN × L`) with `Υ_u(ν)·c = B_u·c_factor`.
fn coupling_system_from_blocks(
    blocks: &[CMatrix],
    moments: &Moments,
    alpha_n: f64,
    vartheta: &[f64],
) -> (CMatrix, CVector) {
    let u_len = blocks.len();
    let (mn, l) = blocks[0].shape();
    let mut stacked = Vec::with_capacity(u_len * mn * l);
    for b in blocks {
        stacked.extend_from_slice(b.as_slice());
    }
    // Row u of `by_atom` is B_u flattened; the same buffer read as (U·MN) × L is the vertical stack.
    let by_atom = CMatrix::new(u_len, mn * l, stacked).expect("non-empty blocks");
    let weighted = moments.s.matmul(&by_atom);
    let vertical = CMatrix::new(u_len * mn, l, by_atom.as_slice().to_vec()).expect("non-empty blocks");
    let weighted_vertical = CMatrix::new(u_len * mn, l, weighted.as_slice().to_vec()).expect("non-empty blocks");
    let alpha = C64::new(alpha_n, 0.0);
    let mut h = vertical.adjoint_matmul(&weighted_vertical).scale(alpha);
    for (m, v) in vartheta.iter().enumerate() {
        h[(m, m)] += v;
    }
    let y = &moments.y;
    let mut z = CVector::zeros(l);
    for (u, b) in blocks.iter().enumerate() {
        let y_u = y.row(u);
        for i in 0..mn {
            let yi = y_u[i];
            for (zm, bm) in z.as_mut_slice().iter_mut().zip(b.row(i)) {
                *zm += bm.conj() * yi;
            }
        }
    }
    (h, z.scale(alpha))
}

/// `(H_T, z_T)` for the transmit coupling update at the current state.
pub fn coupling_system_tx(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> (CMatrix, CVector) {
    tx_system(state, dict, &Moments::new(state, r))
}

/// `(H_R, z_R)` for the receive coupling update at the current state.
pub fn coupling_system_rx(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> (CMatrix, CVector) {
    rx_system(state, dict, &Moments::new(state, r))
}

fn tx_system(state: &SblmcState, dict: &Dictionary, moments: &Moments) -> (CMatrix, CVector) {
    let blocks = dict.tx_blocks(&state.c_rx, &state.nu_rad());
    coupling_system_from_blocks(&blocks, moments, state.alpha_n, &state.vartheta_tx)
}

fn rx_system(state: &SblmcState, dict: &Dictionary, moments: &Moments) -> (CMatrix, CVector) {
    let blocks = dict.rx_blocks(&state.c_tx, &state.nu_rad());
    coupling_system_from_blocks(&blocks, moments, state.alpha_n, &state.vartheta_rx)
}

fn solve_system((h, z): (CMatrix, CVector)) -> Result<CVector> {
    let c = Lu::factor(&h)?.solve_vec(&z);
    let head = c[0];
    if !(head.norm() >= 1e-8) {
        return Err(Error::InvalidCoupling(format!("{head} (cannot normalize)")));
    }
    let mut c = c.scale(head.inv());
    c[0] = C64::new(1.0, 0.0);
    Ok(c)
}

/// New `c_tx`, normalized so its first entry is 1.
pub fn update_coupling_tx(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> Result<CVector> {
    check_data(dict, state, r)?;
    solve_system(coupling_system_tx(state, dict, r))
}

/// New `c_rx`, normalized so its first entry is 1.
pub fn update_coupling_rx(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> Result<CVector> {
    check_data(dict, state, r)?;
    solve_system(coupling_system_rx(state, dict, r))
}

pub fn update_precisions(state: &SblmcState, hyper: &Hyper) -> (Vec<f64>, Vec<f64>) {
    let tx = state.c_tx.iter().map(|c| hyper.e1 / (hyper.f1 + c.norm_sqr())).collect();
    let rx = state.c_rx.iter().map(|c| hyper.e2 / (hyper.f2 + c.norm_sqr())).collect();
    (tx, rx)
}

/// Real linear system for the offsets (radians) restricted to `active`.
#[derive(Clone, Debug)]
pub struct OffsetSystem {
    pub active: Vec<usize>,
    /// `|S| × |S|` real symmetric matrix stored with zero imaginary parts.
    pub h: CMatrix,
    pub z: Vec<f64>,
}

/// Indices whose spectrum exceeds `1e-3` of its maximum.
pub fn active_set(spectrum: &[f64]) -> Vec<usize> {
    let max = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..spectrum.len()).filter(|&u| spectrum[u] > max * 1e-3).collect()
}

/// Full `U × U` offset system `H·ν = z`.
pub fn offset_system_full(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> (CMatrix, Vec<f64>) {
    let atoms = dict.coupled_atoms(&state.c_tx, &state.c_rx);
    offset_system_with(&atoms.psi_c, &atoms.xi_c, &second_moment(state), state, r)
}

fn offset_system_with(
    psi_c: &CMatrix,
    xi_c: &CMatrix,
    s: &CMatrix,
    state: &SblmcState,
    r: &CMatrix,
) -> (CMatrix, Vec<f64>) {
    let u_len = psi_c.cols();
    let p = state.pulses() as f64;
    let gram = xi_c.adjoint_matmul(xi_c);
    let h = CMatrix::from_fn(u_len, u_len, |u, m| C64::new((gram[(u, m)] * s[(u, m)]).re, 0.0));
    let residual = r.sub(&psi_c.matmul(&state.mu));
    let mut v = residual.matmul(&state.mu.adjoint());
    v.add_scaled_assign(C64::new(-p, 0.0), &psi_c.matmul(&state.sigma_x));
    let z = (0..u_len)
        .map(|u| (0..xi_c.rows()).map(|i| (xi_c[(i, u)].conj() * v[(i, u)]).re).sum())
        .collect();
    (h, z)
}

/// Offset system restricted to the active set of the current spectrum.
pub fn offset_system(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> OffsetSystem {
    let (h_full, z_full) = offset_system_full(state, dict, r);
    restrict(&h_full, &z_full, active_set(&spectrum(state)))
}

fn restrict(h_full: &CMatrix, z_full: &[f64], active: Vec<usize>) -> OffsetSystem {
    let h = CMatrix::from_fn(active.len().max(1), active.len().max(1), |i, j| {
        if i < active.len() && j < active.len() {
            h_full[(active[i], active[j])]
        } else {
            ZERO
        }
    });
    let z = active.iter().map(|&u| z_full[u]).collect();
    OffsetSystem { active, h, z }
}

/// Unconstrained solution of the active-set offset system, in radians.
pub fn solve_offsets_raw(sys: &OffsetSystem) -> Vec<f64> {
    if sys.active.is_empty() {
        return Vec::new();
    }
    let z = CVector::from_real(&sys.z);
    let x = match Lu::factor(&sys.h) {
        Ok(lu) => lu.solve_vec(&z),
        Err(_) => {
            let n = sys.active.len();
            let ridge = 1e-10 * sys.h.trace().re / n as f64;
            let mut h = sys.h.clone();
            for i in 0..n {
                h[(i, i)] += ridge;
            }
            match Lu::factor(&h) {
                Ok(lu) => lu.solve_vec(&z),
                Err(_) => return vec![0.0; n],
            }
        }
    };
    x.iter().map(|v| v.re).collect()
}

/// Scatter the raw active-set solution into a clamped full-length vector in degrees.
pub fn finalize_offsets(sys: &OffsetSystem, raw_rad: &[f64], u_len: usize, step_deg: f64) -> Vec<f64> {
    let half = step_deg / 2.0;
    let mut nu = vec![0.0; u_len];
    for (&u, &v) in sys.active.iter().zip(raw_rad) {
        let deg = v.to_degrees();
        nu[u] = if deg.is_finite() { deg.clamp(-half, half) } else { 0.0 };
    }
    nu
}

/// New grid offsets in degrees, clamped to half a grid step.
pub fn update_offsets(state: &SblmcState, dict: &Dictionary, r: &CMatrix) -> Result<Vec<f64>> {
    check_data(dict, state, r)?;
    let sys = offset_system(state, dict, r);
    let raw = solve_offsets_raw(&sys);
    Ok(finalize_offsets(&sys, &raw, dict.len(), dict.grid().step_deg()))
}

fn noise_from(a: &CMatrix, gram: &CMatrix, state: &SblmcState, r: &CMatrix, hyper: &Hyper) -> f64 {
    let (mn, p) = r.shape();
    let u_len = gram.rows();
    let mut n1 = 0.0;
    for u in 0..u_len {
        for k in 0..u_len {
            n1 += (gram[(u, k)] * state.sigma_x[(k, u)]).re;
        }
    }
    let n2 = r.sub(&a.matmul(&state.mu)).frobenius_norm_sqr();
    ((mn * p) as f64 + hyper.a - 1.0) / (p as f64 * n1 + n2 + hyper.b)
}

/// Noise precision `α_n` for the current state.
pub fn update_noise(state: &SblmcState, dict: &Dictionary, r: &CMatrix, hyper: &Hyper) -> Result<f64> {
    check_data(dict, state, r)?;
    let a = effective_dictionary(dict, state);
    let gram = a.adjoint_matmul(&a);
    Ok(noise_from(&a, &gram, state, r, hyper))
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum();
    let base: f64 = old.iter().map(|b| b * b).sum();
    (diff / base).sqrt()
}

/// The coupling factors stay frozen until `λ` first drops to this multiple of `lambda_th`.
pub const WARMUP_FACTOR: f64 = 10.0;

/// Run the EM loop until the relative `β` change drops to `lambda_th` or the
/// iteration budget is spent, then pick `k` peaks on `ζ + ν`.
///
/// In [`Mode::Full`] the loop starts with coupling frozen at identity and
/// switches the coupling updates on once `λ ≤ WARMUP_FACTOR·lambda_th`; the
/// stopping test then waits for a `λ` measured with coupling active.
pub fn run_sblmc(r: &CMatrix, dict: &Dictionary, hyper: &Hyper, k: usize, mode: Mode) -> Result<EstimateResult> {
    hyper.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut st = init_state(dict, hyper, r.cols());
    check_data(dict, &st, r)?;
    let mut warnings = Vec::new();
    let mut trace = Vec::new();
    let mut spec = spectrum(&st);
    let mut a = effective_dictionary(dict, &st);
    let mut gram = a.adjoint_matmul(&a);
    let mut coupling_active = false;

    while st.iter <= hyper.n_iter_max && st.lambda.map_or(true, |l| l > hyper.lambda_th) {
        let (mu, sigma) = posterior_from(&a, &gram, r, &st.beta, st.alpha_n)?;
        st.mu = mu;
        st.sigma_x = sigma;
        spec = spectrum(&st);
        let beta_new = update_beta(&st, hyper);
        let beta_prev = std::mem::replace(&mut st.beta, beta_new);
        let moments = (mode != Mode::OnGrid).then(|| Moments::new(&st, r));

        if coupling_active {
            let moments = moments.as_ref().expect("full mode has moments");
            match solve_system(tx_system(&st, dict, moments)) {
                Ok(c) => st.c_tx = c,
                Err(e) => warnings.push(format!("iteration {}: transmit coupling kept ({e})", st.iter)),
            }
            match solve_system(rx_system(&st, dict, moments)) {
                Ok(c) => st.c_rx = c,
                Err(e) => warnings.push(format!("iteration {}: receive coupling kept ({e})", st.iter)),
            }
            let (tx, rx) = update_precisions(&st, hyper);
            st.vartheta_tx = tx;
            st.vartheta_rx = rx;
        }
        if let Some(moments) = &moments {
            let atoms = dict.coupled_atoms(&st.c_tx, &st.c_rx);
            let (h_full, z_full) = offset_system_with(&atoms.psi_c, &atoms.xi_c, &moments.s, &st, r);
            let sys = restrict(&h_full, &z_full, active_set(&spec));
            let raw = solve_offsets_raw(&sys);
            st.nu_deg = finalize_offsets(&sys, &raw, dict.len(), dict.grid().step_deg());
        }

        a = effective_dictionary(dict, &st);
        gram = a.adjoint_matmul(&a);
        st.alpha_n = noise_from(&a, &gram, &st, r, hyper);

        if st.iter > 1 {
            let lambda = relative_change(&st.beta, &beta_prev);
            trace.push(lambda);
            if mode == Mode::Full && !coupling_active {
                if lambda <= WARMUP_FACTOR * hyper.lambda_th {
                    coupling_active = true;
                    debug!("coupling updates enabled at iteration {}", st.iter);
                }
            } else {
                st.lambda = Some(lambda);
            }
        }
        debug!("iteration {} lambda {:?} alpha_n {:.4e}", st.iter, st.lambda, st.alpha_n);
        st.iter += 1;
    }

    let iters = st.iter - 1;
    let converged = st.lambda.is_some_and(|l| l <= hyper.lambda_th);
    if !converged {
        warn!("{} stopped after {iters} iterations without reaching the threshold", mode.method_name());
        warnings.push(format!("not converged after {iters} iterations"));
    }
    let angles_deg: Vec<f64> = dict.grid().angles_deg().iter().zip(&st.nu_deg).map(|(z, v)| z + v).collect();
    let doas_deg = peak_pick(&spec, &angles_deg, k);
    Ok(EstimateResult {
        method: mode.method_name().to_string(),
        spectrum: spec,
        angles_deg,
        doas_deg,
        state: Some(st),
        trace,
        converged,
        iters,
        warnings,
    })
}
