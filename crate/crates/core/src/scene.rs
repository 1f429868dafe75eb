//! Ground-truth scene generation and synthesis of the stacked pulse matrix
//! `R = Q(Γ ⊗ c) + N` at the post-matched-filter level.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array_model::{phi, ArrayConfig, Grid, GridSpec};
use crate::error::{Error, Result};
use crate::numerics::{sample_cgauss, CMatrix, CVector, C64, ONE};

const MAX_TARGET_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub k_targets: usize,
    pub p_pulses: usize,
    /// `inf` gives noiseless data.
    #[serde(with = "extended_f64")]
    pub snr_db: f64,
    /// Adjacent-antenna coupling magnitude in dB; lag `m` decays as the `m`-th power. `-inf` disables coupling.
    #[serde(with = "extended_f64")]
    pub coupling_db: f64,
    pub min_sep_deg: f64,
    pub seed: u64,
    pub array: ArrayConfig,
    pub grid: GridSpec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            k_targets: 3,
            p_pulses: 100,
            snr_db: 20.0,
            coupling_db: -5.0,
            min_sep_deg: 9.67,
            seed: 1,
            array: ArrayConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.grid.build()?;
        if self.k_targets < 1 || self.p_pulses < 1 {
            return Err(Error::InvalidConfig("need at least one target and one pulse".into()));
        }
        if !(self.min_sep_deg > 0.0) {
            return Err(Error::InvalidConfig("min_sep_deg must be positive".into()));
        }
        if self.snr_db.is_nan() || self.coupling_db.is_nan() {
            return Err(Error::InvalidConfig("snr_db and coupling_db must be numbers".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub thetas_deg: Vec<f64>,
    /// `K × P` scattering coefficients.
    pub gamma: CMatrix,
    pub c_tx: CVector,
    pub c_rx: CVector,
    pub noise_var: f64,
}

/// Received data plus the truth it was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshots {
    pub scene: Scene,
    pub config: SceneConfig,
    /// `MN × P`, column `p` is pulse `p`.
    pub r: CMatrix,
}

impl Snapshots {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snaps: Snapshots = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let mn = snaps.config.array.virtual_len();
        if snaps.r.rows() != mn || snaps.r.cols() != snaps.config.p_pulses {
            return Err(Error::parse(
                path,
                format!("r is {}x{}, expected {mn}x{}", snaps.r.rows(), snaps.r.cols(), snaps.config.p_pulses),
            ));
        }
        Ok(snaps)
    }
}

/// Floats that may be infinite: numbers as usual, `±inf` as the strings `"inf"` / `"-inf"`
/// so they survive JSON.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

/// Draw `K` off-grid angles around interior grid points, separated by at least `min_sep_deg`.
pub fn gen_targets<R: Rng + ?Sized>(cfg: &SceneConfig, grid: &Grid, rng: &mut R) -> Result<Vec<f64>> {
    let u_len = grid.len();
    if u_len < 3 {
        return Err(Error::InfeasibleScene { k: cfg.k_targets, min_sep_deg: cfg.min_sep_deg, attempts: 0 });
    }
    let half = grid.step_deg() / 2.0;
    for _ in 0..MAX_TARGET_ATTEMPTS {
        let mut thetas: Vec<f64> = (0..cfg.k_targets)
            .map(|_| {
                let u = rng.gen_range(1..u_len - 1);
                let offset = if half > 0.0 { rng.gen_range(-half..half) } else { 0.0 };
                grid.angles_deg()[u] + offset
            })
            .collect();
        thetas.sort_by(f64::total_cmp);
        if thetas.windows(2).all(|w| w[1] - w[0] >= cfg.min_sep_deg) {
            return Ok(thetas);
        }
    }
    Err(Error::InfeasibleScene {
        k: cfg.k_targets,
        min_sep_deg: cfg.min_sep_deg,
        attempts: MAX_TARGET_ATTEMPTS,
    })
}

/// `K × P` i.i.d. unit-variance circular complex Gaussian scattering coefficients.
pub fn gen_gamma<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> CMatrix {
    let k = cfg.k_targets;
    let p = cfg.p_pulses;
    CMatrix::new(k, p, sample_cgauss(rng, k * p, 1.0).into_vec()).expect("K, P >= 1")
}

/// Coupling vector `[1, ρe^{jφ₁}, ρ²e^{jφ₂}, …]` with `ρ = 10^(coupling_db/20)` and uniform phases.
pub fn gen_coupling<R: Rng + ?Sized>(len: usize, coupling_db: f64, rng: &mut R) -> CVector {
    assert!(len >= 2, "gen_coupling: length must be at least 2");
    let rho = 10f64.powf(coupling_db / 20.0);
    let mut c = CVector::zeros(len);
    c[0] = ONE;
    for m in 1..len {
        let phase = rng.gen_range(0.0..2.0 * PI);
        c[m] = C64::from_polar(rho.powi(m as i32), phase);
    }
    c
}

/// Noiseless data: column `p` is `Σ_k Γ_{k,p}·Φ(θ_k)·(c_rx ⊗ c_tx)`.
pub fn noiseless(scene: &Scene, array: &ArrayConfig) -> CMatrix {
    let c = scene.c_rx.kron(&scene.c_tx);
    let atoms: Vec<CVector> = scene.thetas_deg.iter().map(|&t| phi(t, array).mul_vec(&c)).collect();
    let mn = array.virtual_len();
    let p_len = scene.gamma.cols();
    let mut r = CMatrix::zeros(mn, p_len);
    for (k, atom) in atoms.iter().enumerate() {
        let gamma_row = scene.gamma.row(k);
        for i in 0..mn {
            for (z, g) in r.row_mut(i).iter_mut().zip(gamma_row) {
                *z += atom[i] * g;
            }
        }
    }
    r
}

/// Noise variance giving `10·log10(‖R₀‖²_F / (MN·P·σ²)) = snr_db`; zero for infinite SNR.
pub fn noise_variance_for(signal: &CMatrix, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    let per_entry = signal.frobenius_norm_sqr() / (signal.rows() * signal.cols()) as f64;
    per_entry / 10f64.powf(snr_db / 10.0)
}

/// Add noise to the noiseless model at the configured SNR and record the noise level in the scene.
pub fn synthesize<R: Rng + ?Sized>(mut scene: Scene, cfg: &SceneConfig, rng: &mut R) -> Snapshots {
    let mut r = noiseless(&scene, &cfg.array);
    let noise_var = noise_variance_for(&r, cfg.snr_db);
    if noise_var > 0.0 {
        let noise = sample_cgauss(rng, r.rows() * r.cols(), noise_var);
        for (z, n) in r.as_mut_slice().iter_mut().zip(noise.iter()) {
            *z += n;
        }
    }
    scene.noise_var = noise_var;
    Snapshots { scene, config: cfg.clone(), r }
}

/// Full generation pipeline, a pure function of `(cfg, seed)`.
pub fn simulate(cfg: &SceneConfig, seed: u64) -> Result<Snapshots> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas_deg = gen_targets(cfg, &grid, &mut rng)?;
    let gamma = gen_gamma(cfg, &mut rng);
    let c_tx = gen_coupling(cfg.array.m_tx, cfg.coupling_db, &mut rng);
    let c_rx = gen_coupling(cfg.array.n_rx, cfg.coupling_db, &mut rng);
    let scene = Scene { thetas_deg, gamma, c_tx, c_rx, noise_var: 0.0 };
    let mut config = cfg.clone();
    config.seed = seed;
    Ok(synthesize(scene, &config, &mut rng))
}
