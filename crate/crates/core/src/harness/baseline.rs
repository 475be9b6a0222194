//! Max-effort sweep over scarcity levels: how long does the resource last
//! when every agent harvests at full effort?

use serde::{Deserialize, Serialize};

use super::persist::fmt_float;
use crate::analytics::{limit_sustainable_harvesting, max_effort_baseline, seq_from_multiplier};
use crate::env::EnvParams;
use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub n_agents: usize,
    pub m_s: f64,
    pub s_eq: f64,
    pub length: usize,
    pub social_welfare: f64,
    pub survived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSweep {
    pub rows: Vec<BaselineRow>,
    /// Per population: analytic limit and smallest surviving `s_eq` on the grid.
    pub limits: Vec<(usize, f64, Option<f64>)>,
}

/// Runs max effort for every population and every `M_s` in
/// `lo_ms, lo_ms + step, ..., hi_ms`.
pub fn baseline_sweep(
    agents: &[usize],
    growth_rate: f64,
    e_max: f64,
    horizon: usize,
    (lo_ms, hi_ms, step): (f64, f64, f64),
) -> Result<BaselineSweep> {
    if !(step > 0.0) || !(lo_ms > 0.0) || hi_ms < lo_ms {
        return param("need 0 < lo <= hi and a positive step");
    }
    let count = ((hi_ms - lo_ms) / step + 1e-9).floor() as usize;
    let mut rows = Vec::new();
    let mut limits = Vec::new();
    for &n in agents {
        let mut first = None;
        for i in 0..=count {
            let m_s = lo_ms + step * i as f64;
            let s_eq = seq_from_multiplier(m_s, n, growth_rate, e_max)?;
            let p = EnvParams::new(n, s_eq, horizon)
                .with_growth_rate(growth_rate)
                .with_e_max(e_max);
            let run = max_effort_baseline(&p, horizon)?;
            if run.survived() && first.is_none() {
                first = Some(s_eq);
            }
            rows.push(BaselineRow {
                n_agents: n,
                m_s,
                s_eq,
                length: run.length,
                social_welfare: run.social_welfare,
                survived: run.survived(),
            });
        }
        limits.push((n, limit_sustainable_harvesting(n, growth_rate, e_max)?, first));
    }
    Ok(BaselineSweep { rows, limits })
}

pub fn baseline_csv(rows: &[BaselineRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(["n_agents", "m_s", "s_eq", "length", "social_welfare", "survived"])?;
    for r in rows {
        w.write_record([
            r.n_agents.to_string(),
            fmt_float(r.m_s),
            fmt_float(r.s_eq),
            r.length.to_string(),
            fmt_float(r.social_welfare),
            r.survived.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_switches_on_once() {
        let s = baseline_sweep(&[4], 1.0, 1.0, 200, (0.5, 1.5, 0.05)).unwrap();
        let alive: Vec<bool> = s.rows.iter().map(|r| r.survived).collect();
        let k = alive.iter().position(|a| *a).unwrap();
        assert!(alive[k..].iter().all(|a| *a));
        assert!(s.rows[0].length <= 2);
        let (_, lsh, first) = s.limits[0];
        assert!((first.unwrap() - lsh).abs() / lsh < 0.1);
    }

    #[test]
    fn rejects_bad_range() {
        assert!(baseline_sweep(&[2], 1.0, 1.0, 10, (0.5, 0.4, 0.1)).is_err());
        assert!(baseline_sweep(&[2], 1.0, 1.0, 10, (0.5, 0.6, 0.0)).is_err());
    }
}
