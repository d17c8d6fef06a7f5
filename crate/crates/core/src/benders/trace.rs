use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stabilization::UpdateEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TracePhase {
    WarmStart,
    Stabilized,
    Global,
}

/// One Benders iteration. Bounds in dollars; `gap` against the best of the
/// certified and global-master lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub master_obj: f64,
    #[serde(rename = "UB")]
    pub ub: f64,
    #[serde(rename = "LB_local")]
    pub lb_local: f64,
    #[serde(rename = "LB_star")]
    pub lb_star: f64,
    pub gap: f64,
    pub n_cuts_feas: usize,
    pub n_cuts_opt: usize,
    pub seconds: f64,
    pub phase: TracePhase,
    #[serde(rename = "LB_global")]
    pub lb_global: f64,
    pub trust_region: bool,
    /// Transmission radius the master was solved with.
    pub radius: u32,
    pub storage_radius: u32,
    /// Distance of the iterate from the anchor it was solved around.
    pub dist_gamma: u32,
    pub dist_sigma: u32,
    pub event: UpdateEvent,
    pub anchor_moved: bool,
    pub radius_after: u32,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
