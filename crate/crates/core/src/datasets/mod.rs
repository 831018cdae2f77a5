//! Synthetic data generation, cause-effect corpora, and file formats.

mod dag;
mod generate;
mod io;
mod samples;

use std::fmt;

pub use dag::{random_dag, random_dag_with, Dag, GraphModel};
pub use generate::{generate, generate_on_dag, generate_pair, Family, GenConfig};
pub use io::{
    dag_to_csv, load_csv, load_pairs, parse_csv, parse_dag_csv, parse_whitespace_columns, read_bundle,
    samples_to_csv, write_bundle, write_csv, Bundle, CausePair, PairDataset, SkippedPair, CONFIG_FILE, DAG_FILE,
    DATA_FILE, MANIFEST_FILE,
};
pub use samples::{default_names, SampleMatrix, Standardized};

/// Which column of a bivariate pair is the effect. `Y` means the first column causes the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    Y,
    X,
}

impl Effect {
    pub fn flipped(self) -> Self {
        match self {
            Effect::Y => Effect::X,
            Effect::X => Effect::Y,
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Y => "x->y",
            Effect::X => "y->x",
        })
    }
}
