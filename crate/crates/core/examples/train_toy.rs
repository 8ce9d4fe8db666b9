//! Trains the toy configuration and prints per-epoch progress and a sweep.
//!
//! `cargo run --release -p meshmark --example train_toy -- [epochs]`

use std::time::Instant;

use meshmark::attacks::AttackKind;
use meshmark::model::ModelConfig;
use meshmark::synth::{generate, SynthSpec};
use meshmark::train::{default_grid, evaluate, train_with, TrainConfig};

fn main() -> meshmark::Result<()> {
    let epochs = std::env::args().nth(1).map_or(Ok(20), |s| s.parse()).expect("epochs");
    let data = generate(&SynthSpec { count: 120, ..Default::default() })?;
    let (train_set, test_set) = data.split_at(100);
    let config = TrainConfig {
        epochs,
        model: ModelConfig { bits: 16, ..Default::default() },
        ..Default::default()
    };
    let start = Instant::now();
    let run = train_with::<f32>(&config, train_set, |row| {
        println!("{} ({:.0}s)", row.csv(), start.elapsed().as_secs_f64());
    })?;
    let grid: Vec<(AttackKind, f64)> = std::iter::once((AttackKind::Identity, 0.0)).chain(default_grid()).collect();
    for row in evaluate(&run.model, test_set, &grid, 1)? {
        println!("{}", row.csv());
    }
    Ok(())
}
