use std::fs::OpenOptions;
use std::path::Path;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub timesteps: Vec<usize>,
    pub noise: f64,
    pub facial: f64,
    /// Mean time weight over the batch.
    pub weight: f64,
    pub disc: f64,
}

/// One record per optimization step, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    records: Vec<LossRecord>,
}

pub const LOSS_LOG_HEADER: &str = "iter,timesteps,noise,facial,weight,disc";

impl LossLog {
    pub fn push(&mut self, r: LossRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[LossRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn noise(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.noise).collect()
    }

    /// Appends to `path`, writing the header if the file is new or empty.
    pub fn append_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut w = csv::Writer::from_writer(OpenOptions::new().create(true).append(true).open(path)?);
        if fresh {
            w.write_record(LOSS_LOG_HEADER.split(','))?;
        }
        for r in &self.records {
            let ts = r.timesteps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
            w.write_record([
                r.iter.to_string(),
                ts,
                format!("{:e}", r.noise),
                format!("{:e}", r.facial),
                format!("{:e}", r.weight),
                format!("{:e}", r.disc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let mut log = Self::default();
        for row in rd.records() {
            let row = row?;
            let f = |i: usize| row[i].parse::<f64>().map_err(|e| crate::error::invalid(format!("loss log: {e}")));
            log.push(LossRecord {
                iter: row[0].parse().map_err(|e| crate::error::invalid(format!("loss log: {e}")))?,
                timesteps: row[1]
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| crate::error::invalid(format!("loss log: {e}"))))
                    .collect::<Result<_>>()?,
                noise: f(2)?,
                facial: f(3)?,
                weight: f(4)?,
                disc: f(5)?,
            });
        }
        Ok(log)
    }
}

/// Mean of the first and last `n` values.
pub fn leading_trailing_means(xs: &[f64], n: usize) -> Option<(f64, f64)> {
    if n == 0 || xs.len() < n {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&xs[..n]), mean(&xs[xs.len() - n..])))
}
