//! Shared fixtures for the benchmarks.

use pqiga::config::{Config, RecipeKind};
use pqiga::harness::experiment::mixture_seed;
use pqiga::harness::{Mixture, Recipe};

/// One second of the given recipe at the default settings.
pub fn mixture(kind: RecipeKind, index: usize) -> Mixture {
    let mut c = Config::default();
    c.experiment.recipe = kind;
    Recipe::from_config(&c)
        .generate(mixture_seed(0, index), format!("bench-{index}"))
        .expect("default recipe is valid")
}
