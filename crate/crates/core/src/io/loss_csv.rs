use std::fmt::Write;
use std::path::Path;

use super::atomic::write_atomic;
use crate::error::Result;
use crate::lpn::LossRecord;

/// `step,loss_rec,loss_reg,total` with full-precision values.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,loss_rec,loss_reg,total\n");
    for r in history {
        writeln!(out, "{},{:e},{:e},{:e}", r.step, r.loss_rec, r.loss_reg, r.total).unwrap();
    }
    out
}

pub fn write_loss_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    write_atomic(path, loss_history_csv(history).as_bytes())
}
