#![allow(dead_code)]

use toxpipe::config::PipelineConfig;
use toxpipe::dataset::{read_tox21_csv, write_tox21_csv, Dataset};
use toxpipe::synthetic::{generate, SyntheticParams};

/// Synthetic dataset pushed through the CSV loader.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let text = write_tox21_csv(&generate(n, seed, &SyntheticParams::default()));
    read_tox21_csv(text.as_bytes()).unwrap()
}

/// A configuration small enough to train in about a second.
pub fn tiny_config() -> PipelineConfig {
    PipelineConfig::parse(
        "image_size = 32\nblock_layers = 1,1\ngrowth_rate = 4\nstem_channels = 8\n\
         epochs = 1\nbatch_size = 8\nrf_trees = 10\ngbm_rounds = 10\nsvm_epochs = 5\naugment_runs = 3\n",
    )
    .unwrap()
}
