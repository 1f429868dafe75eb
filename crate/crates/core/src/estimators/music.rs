use serde::{Deserialize, Serialize};

use crate::array_model::{steering_virtual, ArrayConfig, Grid};
use crate::error::{Error, Result};
use crate::estimators::peak_pick;
use crate::numerics::{hermitian_eigen, CMatrix, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MusicResult {
    pub angles_deg: Vec<f64>,
    pub pseudospectrum: Vec<f64>,
    pub doas_deg: Vec<f64>,
}

/// Subspace estimate on a fine grid over `[range_deg.0, range_deg.1]`, assuming no coupling.
pub fn music_estimate(
    r: &CMatrix,
    cfg: &ArrayConfig,
    k: usize,
    fine_step_deg: f64,
    range_deg: (f64, f64),
) -> Result<MusicResult> {
    let mn = cfg.virtual_len();
    if r.rows() != mn {
        return Err(Error::Dimension(format!("data has {} rows, expected {mn}", r.rows())));
    }
    if k == 0 || k >= mn {
        return Err(Error::InvalidConfig(format!("MUSIC needs 1 <= k < {mn}, got {k}")));
    }
    let p = r.cols() as f64;
    let mut cov = CMatrix::zeros(mn, mn);
    for j in 0..r.cols() {
        for i in 0..mn {
            let ri = r[(i, j)];
            for l in 0..mn {
                cov[(i, l)] += ri * r[(l, j)].conj();
            }
        }
    }
    let cov = cov.scale(C64::new(1.0 / p, 0.0));
    let (values, vectors) = hermitian_eigen(&cov)?;
    let threshold = 1e-8 * cov.trace().re / mn as f64;
    let significant = values.iter().filter(|v| **v > threshold).count();
    if significant < k {
        return Err(Error::RankDeficient { significant, needed: k });
    }
    // eigenvalues ascending: the first MN - k columns span the noise subspace
    let noise_dim = mn - k;
    let grid = Grid::uniform(range_deg.0, range_deg.1, fine_step_deg)?;
    let pseudospectrum: Vec<f64> = grid
        .angles_deg()
        .iter()
        .map(|&theta| {
            let d = steering_virtual(theta, cfg);
            let proj: f64 = (0..noise_dim)
                .map(|col| (0..mn).map(|i| vectors[(i, col)].conj() * d[i]).sum::<C64>().norm_sqr())
                .sum();
            1.0 / proj.max(f64::MIN_POSITIVE)
        })
        .collect();
    let doas_deg = peak_pick(&pseudospectrum, grid.angles_deg(), k);
    Ok(MusicResult { angles_deg: grid.angles_deg().to_vec(), pseudospectrum, doas_deg })
}
