//! On-disk designs. Complex numbers are `[re, im]`, matrices lists of rows.

use irsrob_core::channel_model::mw_to_dbm;
use irsrob_core::{AoOutcome, AoTrace, BeamformingSolution, CMat, CVec, Method};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: Method,
    pub f: Vec<Vec<[f64; 2]>>,
    pub e: Vec<[f64; 2]>,
    pub power_mw: f64,
    pub power_dbm: f64,
    pub status: String,
    pub trace: AoTrace,
}

impl SolutionFile {
    pub fn new(method: Method, out: &AoOutcome) -> Self {
        let s = &out.solution;
        Self {
            method,
            f: s.f.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect(),
            e: s.e.iter().map(|z| [z.re, z.im]).collect(),
            power_mw: s.power,
            power_dbm: mw_to_dbm(s.power),
            status: crate::runner::status_name(out.status).into(),
            trace: out.trace.clone(),
        }
    }

    pub fn solution(&self) -> Result<BeamformingSolution, String> {
        let rows = self.f.len();
        let cols = self.f.first().map_or(0, |r| r.len());
        if self.f.iter().any(|r| r.len() != cols) {
            return Err("ragged precoder".into());
        }
        let f = CMat::from_fn(rows, cols, |i, j| Complex64::new(self.f[i][j][0], self.f[i][j][1]));
        let e = CVec::from_iterator(self.e.len(), self.e.iter().map(|p| Complex64::new(p[0], p[1])));
        let power = f.norm_squared();
        Ok(BeamformingSolution { f, e, power })
    }
}
