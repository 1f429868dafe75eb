//! DOA estimators and scoring.

mod music;
mod sblmc;

pub use music::{music_estimate, MusicResult};
pub use sblmc::*;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Pick `k` peaks from `spectrum` and return their angles, sorted ascending.
///
/// Strict local maxima come first (largest value wins, lower index on ties);
/// if there are fewer than `k` of them the remaining entries fill in by value.
pub fn peak_pick(spectrum: &[f64], angles_deg: &[f64], k: usize) -> Vec<f64> {
    assert_eq!(spectrum.len(), angles_deg.len(), "peak_pick: length mismatch");
    let n = spectrum.len();
    let is_peak = |i: usize| {
        let left = i == 0 || spectrum[i] > spectrum[i - 1];
        let right = i + 1 == n || spectrum[i] > spectrum[i + 1];
        left && right
    };
    let by_value = |a: &usize, b: &usize| spectrum[*b].total_cmp(&spectrum[*a]).then(a.cmp(b));
    let (mut peaks, mut rest): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_peak(i));
    peaks.sort_by(by_value);
    rest.sort_by(by_value);
    let mut chosen: Vec<f64> = peaks.into_iter().chain(rest).take(k).map(|i| angles_deg[i]).collect();
    chosen.sort_by(f64::total_cmp);
    chosen
}

/// `10·log10 ‖θ̂ − θ‖²` in radians after sorting both sides; `-inf` on exact recovery.
pub fn error_metric(est_deg: &[f64], true_deg: &[f64]) -> Result<f64> {
    if est_deg.len() != true_deg.len() {
        return Err(Error::LengthMismatch { estimated: est_deg.len(), truth: true_deg.len() });
    }
    let mut est = est_deg.to_vec();
    let mut truth = true_deg.to_vec();
    est.sort_by(f64::total_cmp);
    truth.sort_by(f64::total_cmp);
    let sq: f64 = est.iter().zip(&truth).map(|(a, b)| (a.to_radians() - b.to_radians()).powi(2)).sum();
    Ok(10.0 * sq.log10())
}

/// Render an error value the way reports store it.
pub fn format_error_db(value: f64) -> String {
    if value == f64::NEG_INFINITY {
        "exact".to_string()
    } else if value == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{value}")
    }
}

/// Inverse of [`format_error_db`].
pub fn parse_error_db(text: &str) -> Option<f64> {
    match text {
        "exact" => Some(f64::NEG_INFINITY),
        "inf" => Some(f64::INFINITY),
        other => other.parse().ok(),
    }
}

impl EstimateResult {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    /// `angle_deg,power` rows on the reported angles.
    pub fn write_spectrum_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_spectrum_csv(path, &self.angles_deg, &self.spectrum)
    }
}

pub fn write_spectrum_csv(path: impl AsRef<Path>, angles_deg: &[f64], power: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("angle_deg,power\n");
    for (a, p) in angles_deg.iter().zip(power) {
        out.push_str(&format!("{a},{p}\n"));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
