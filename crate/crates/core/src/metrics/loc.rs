use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::l1_error_mm;

/// One localization case: predictions on the resampled grid, ground truth
/// on the original grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocEvalInput {
    pub pred_start: f64,
    pub pred_end: f64,
    pub gt_start: f64,
    pub gt_end: f64,
    pub s_res: f64,
    pub s_ori: f64,
}

impl LocEvalInput {
    pub fn errors_mm(&self) -> Result<(f64, f64)> {
        if !(self.s_res > 0.0 && self.s_ori > 0.0) {
            return Err(Error::Validation(format!(
                "spacings must be positive, got s_res={} s_ori={}",
                self.s_res, self.s_ori
            )));
        }
        Ok((
            l1_error_mm(self.pred_start, self.gt_start, self.s_res, self.s_ori),
            l1_error_mm(self.pred_end, self.gt_end, self.s_res, self.s_ori),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocEvalRow {
    pub avg_mm: f64,
    pub max_mm: f64,
    pub pct_le_5mm: f64,
    pub pct_le_10mm: f64,
}

impl LocEvalRow {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Contract("no cases to evaluate".into()));
        }
        let n = errors.len() as f64;
        let pct = |t: f64| 100.0 * errors.iter().filter(|&&e| e <= t + 1e-9).count() as f64 / n;
        Ok(LocEvalRow {
            avg_mm: errors.iter().sum::<f64>() / n,
            max_mm: errors.iter().copied().fold(0.0, f64::max),
            pct_le_5mm: pct(5.0),
            pct_le_10mm: pct(10.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocEvalTable {
    pub cases: usize,
    pub start: LocEvalRow,
    pub end: LocEvalRow,
}

impl std::fmt::Display for LocEvalTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "endpoint  avg_mm  max_mm  <=5mm(%)  <=10mm(%)")?;
        for (name, r) in [("start", &self.start), ("end", &self.end)] {
            writeln!(
                f,
                "{name:<8} {:>7.2} {:>7.2} {:>9.1} {:>10.1}",
                r.avg_mm, r.max_mm, r.pct_le_5mm, r.pct_le_10mm
            )?;
        }
        Ok(())
    }
}

pub fn loc_eval_table(cases: &[LocEvalInput]) -> Result<LocEvalTable> {
    if cases.is_empty() {
        return Err(Error::Contract("loc_eval_table needs at least one case".into()));
    }
    let mut starts = Vec::with_capacity(cases.len());
    let mut ends = Vec::with_capacity(cases.len());
    for c in cases {
        let (s, e) = c.errors_mm()?;
        starts.push(s);
        ends.push(e);
    }
    Ok(LocEvalTable {
        cases: cases.len(),
        start: LocEvalRow::from_errors(&starts)?,
        end: LocEvalRow::from_errors(&ends)?,
    })
}
