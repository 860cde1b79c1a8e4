use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Algorithm, ArmResult};
use crate::error::Result;

/// One line of the comparison table: mean adaptation time, mean
/// efficiency, and the time needed to reach the target ESS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub reps: usize,
    pub adapt_time: f64,
    pub efficiency: f64,
    pub time_to_target: f64,
}

impl ComparisonRow {
    /// `time_to_target = target / efficiency + adapt_time`; infinite when
    /// the efficiency is not positive.
    pub fn new(algorithm: impl Into<String>, reps: usize, adapt_time: f64, efficiency: f64, target: f64) -> Self {
        let time_to_target = if efficiency > 0.0 {
            target / efficiency + adapt_time
        } else {
            f64::INFINITY
        };
        Self {
            algorithm: algorithm.into(),
            reps,
            adapt_time,
            efficiency,
            time_to_target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub target: f64,
    pub rows: Vec<ComparisonRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl ComparisonTable {
    pub fn from_arms(algorithms: &[Algorithm], arms: &[ArmResult], target: f64) -> Self {
        let rows = algorithms
            .iter()
            .map(|&a| {
                let mine: Vec<&ArmResult> = arms.iter().filter(|r| r.algorithm == a).collect();
                ComparisonRow::new(
                    a.name(),
                    mine.len(),
                    mean(mine.iter().map(|r| r.adapt_time)),
                    mean(mine.iter().map(|r| r.final_efficiency)),
                    target,
                )
            })
            .collect();
        Self { target, rows }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read rows written by [`ComparisonTable::write_csv`].
    pub fn read_csv<R: Read>(r: R, target: f64) -> Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<Vec<ComparisonRow>, _>>()?;
        Ok(Self { target, rows })
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<22} {:>5} {:>14} {:>14} {:>16}",
            "algorithm", "reps", "adapt time", "efficiency", "time to target"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:>5} {:>14.6e} {:>14.6e} {:>16.6e}",
                r.algorithm, r.reps, r.adapt_time, r.efficiency, r.time_to_target
            )?;
        }
        write!(f, "target ESS: {}", self.target)
    }
}

/// Efficiency of one replication at one stage, for box plots over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub algorithm: String,
    pub rep: usize,
    /// Outer iteration number, or `final`.
    pub stage: String,
    pub time: f64,
    pub efficiency: f64,
}

impl BoxplotRow {
    pub fn write_csv<W: Write>(rows: &[BoxplotRow], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<BoxplotRow>> {
        Ok(csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<Vec<BoxplotRow>, _>>()?)
    }
}
