//! A short training run on a small synthetic corpus, then a checkpoint
//! round trip and held-out evaluation.

use mcdepth::simdata::{generate_split, DatasetProfile, SimConfig};
use mcdepth::train::{fit, initial_state, validate, FitOptions, TrainConfig, TrainData, TrainState};

fn main() -> mcdepth::Result<()> {
    let sim = SimConfig {
        width: 64,
        height: 64,
        ..SimConfig::default()
    };
    let dense = generate_split(&sim, &DatasetProfile::stereo(56.0, 0.2), 1, 0..12)?;
    let sparse = generate_split(&sim, &DatasetProfile::orchard(48.0), 1, 0..12)?;
    let val = generate_split(&sim, &DatasetProfile::stereo(56.0, 0.2), 1, 12..16)?;
    let data = TrainData {
        dense: &dense,
        sparse: &sparse,
    };
    let cfg = TrainConfig {
        epochs: 4,
        t_max: 4.0,
        crop: 48,
        seed: 1,
        ..TrainConfig::desk()
    };

    let out = fit(initial_state(data, &cfg)?, data, &cfg, FitOptions::default())?;
    for e in &out.epochs {
        println!("epoch {} lr {:.2e} mean loss {:.4} ({} batches)", e.epoch, e.lr, e.mean_loss, e.batches);
    }
    let last = out.steps.last().expect("at least one step");
    println!("loss weights: alpha {:.3} beta {:.3} gamma {:.3}", last.alpha, last.beta, last.gamma);

    let path = std::env::temp_dir().join("mcdepth_training_example.ckpt");
    out.state.save(&path)?;
    let state = TrainState::load(&path)?;
    assert_eq!(state, out.state);
    let report = validate(&state, &val, cfg.loss.sparse_cap, cfg.loss.dense_cap)?;
    if let Some(d) = report.dense {
        println!("held-out dense: rmse {:.3} abs_rel {:.3} d1 {:.3}", d.rmse, d.abs_rel, d.delta1);
    }
    Ok(())
}
