//! Bits shared by the training loops: loss logs and batch ordering.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub objective: String,
    pub loss: f64,
}

/// CSV with header `epoch,step,objective,loss`.
pub fn write_loss_log(w: &mut impl Write, log: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,step,objective,loss")?;
    for r in log {
        writeln!(w, "{},{},{},{}", r.epoch, r.step, r.objective, r.loss)?;
    }
    Ok(())
}

pub fn save_loss_log(path: impl AsRef<Path>, log: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_loss_log(&mut f, log).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// A fresh random partition of `0..n` into batches of at most `batch`.
pub fn shuffled_batches(rng: &mut impl Rng, n: usize, batch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

pub(crate) fn check_loss(loss: f64, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, step, loss })
    }
}
