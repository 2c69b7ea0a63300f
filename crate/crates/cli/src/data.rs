use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rebasin_core::data::{data_dir_or, gen_blobs, gen_quadrant_dataset, load_mnist};
use rebasin_core::{Dataset, Split};

/// Fixed generator seed for synthetic data, so every subcommand sees the
/// same rows regardless of `--seed`.
const SYNTHETIC_SEED: u64 = 0;
const SYNTHETIC_TRAIN_ROWS: usize = 4000;
const SYNTHETIC_TEST_ROWS: usize = 2000;
const BLOB_CLASSES: usize = 4;
const BLOB_DIM: usize = 16;
const BLOB_SPREAD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    Quadrant,
    Blobs,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with MNIST IDX files [default: $REBASIN_DATA_DIR or data/mnist]
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    pub mnist: Option<PathBuf>,

    /// Use a generated dataset instead of MNIST
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,

    /// Keep only the first N training rows
    #[arg(long, value_name = "N")]
    pub subset: Option<usize>,
}

impl DataArgs {
    pub fn describe(&self) -> String {
        match self.synthetic {
            Some(Synthetic::Quadrant) => "quadrant".into(),
            Some(Synthetic::Blobs) => "blobs".into(),
            None => self.mnist_dir().display().to_string(),
        }
    }

    fn mnist_dir(&self) -> PathBuf {
        self.mnist.clone().unwrap_or_else(|| data_dir_or("data/mnist"))
    }

    /// Train and test splits.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self.synthetic {
            Some(kind) => {
                let all = match kind {
                    Synthetic::Quadrant => gen_quadrant_dataset(SYNTHETIC_TRAIN_ROWS + SYNTHETIC_TEST_ROWS, SYNTHETIC_SEED)?,
                    Synthetic::Blobs => gen_blobs(
                        SYNTHETIC_TRAIN_ROWS + SYNTHETIC_TEST_ROWS,
                        BLOB_CLASSES,
                        BLOB_DIM,
                        BLOB_SPREAD,
                        SYNTHETIC_SEED,
                    )?,
                };
                let idx: Vec<usize> = (0..all.len()).collect();
                let (tr, te) = idx.split_at(SYNTHETIC_TRAIN_ROWS);
                let mut test = all.select(te);
                test.split = Split::Test;
                (all.select(tr), test)
            }
            None => {
                let dir = self.mnist_dir();
                if !dir.is_dir() {
                    bail!(
                        "MNIST directory {} not found (pass --mnist DIR, set REBASIN_DATA_DIR, or run scripts/fetch_mnist.sh)",
                        dir.display()
                    );
                }
                load_mnist(&dir).with_context(|| format!("loading MNIST from {}", dir.display()))?
            }
        };
        let train = match self.subset {
            Some(0) => bail!("--subset must be positive"),
            Some(n) => train.head(n),
            None => train,
        };
        Ok((train, test))
    }
}
