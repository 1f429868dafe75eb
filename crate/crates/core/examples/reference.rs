//! One reference scene through every estimator.

use std::time::Instant;

use coupled_doa::array_model::build_dictionary;
use coupled_doa::estimators::{error_metric, music_estimate, run_sblmc, Hyper, Mode};
use coupled_doa::scene::{simulate, SceneConfig};

fn main() -> coupled_doa::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SceneConfig::default();
    let snaps = simulate(&cfg, seed)?;
    let grid = cfg.grid.build()?;
    let dict = build_dictionary(&grid, &cfg.array)?;
    let hyper = Hyper::default();
    println!("truth  {:?}", snaps.scene.thetas_deg);
    for mode in [Mode::Full, Mode::NoCoupling, Mode::OnGrid] {
        let start = Instant::now();
        let res = run_sblmc(&snaps.r, &dict, &hyper, cfg.k_targets, mode)?;
        let err = error_metric(&res.doas_deg, &snaps.scene.thetas_deg)?;
        println!(
            "{:6} {:?} error {:.2} dB, {} iterations, {:.2} s",
            res.method,
            res.doas_deg,
            err,
            res.iters,
            start.elapsed().as_secs_f64()
        );
    }
    let music = music_estimate(&snaps.r, &cfg.array, cfg.k_targets, 0.01, (-80.0, 80.0))?;
    let err = error_metric(&music.doas_deg, &snaps.scene.thetas_deg)?;
    println!("music  {:?} error {err:.2} dB", music.doas_deg);
    Ok(())
}
