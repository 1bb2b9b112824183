//! Consumer serviceability and equivalent outage hours.
//!
//! For a network with consumers `i`, supplied amounts `s_i(t)` and normal
//! (undisrupted) amounts `S_i(t)`:
//!
//! ```text
//! ECS(t) = (1 / n(t)) Σ_i min(s_i / S_i, 1)          over i with S_i(t) > 0
//! PCS(t) = Σ_i min(s_i, S_i) / Σ_i S_i
//! EOH    = (1 / 3600) ∫_{t0}^{T} (1 - MOP(t)) dt      MOP = ECS or PCS
//! ```
//!
//! Instants where no consumer has positive normal demand have no
//! serviceability; they are skipped when integrating.

mod stats;

pub use stats::{benjamini_hochberg, paired_comparison, repeated_measures_anova, AnovaTable, PairedComparison};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Mean per-consumer service ratio; `None` when no consumer has demand.
///
/// ```
/// use lifeline::metrics::ecs;
/// assert_eq!(ecs(&[10.0, 5.0], &[10.0, 10.0]), Some(0.75));
/// ```
pub fn ecs(supplied: &[f64], demanded: &[f64]) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (&s, &d) in supplied.iter().zip(demanded) {
        if d > 0.0 {
            n += 1;
            sum += (s.max(0.0) / d).min(1.0);
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Aggregate service ratio; `None` when total demand is zero.
///
/// ```
/// use lifeline::metrics::pcs;
/// assert_eq!(pcs(&[30.0, 0.0], &[30.0, 10.0]), Some(0.75));
/// ```
pub fn pcs(supplied: &[f64], demanded: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&s, &d) in supplied.iter().zip(demanded) {
        if d > 0.0 {
            num += s.clamp(0.0, d);
            den += d;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Measure of performance integrated by EOH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mop {
    Ecs,
    #[default]
    Pcs,
}

impl FromStr for Mop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ecs" => Ok(Mop::Ecs),
            "pcs" => Ok(Mop::Pcs),
            _ => Err(Error::InvalidInput(format!("unknown measure '{s}' (expected ecs or pcs)"))),
        }
    }
}

impl fmt::Display for Mop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mop::Ecs => "ecs",
            Mop::Pcs => "pcs",
        })
    }
}

/// How a sampled curve behaves between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Straight lines between samples (trapezoidal rule).
    Linear,
    /// Each value holds until the next sample.
    Step,
}

/// Per-consumer supply and normal demand of one network over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSeries {
    pub network: Network,
    pub mode: CurveMode,
    /// s, strictly increasing
    pub times: Vec<f64>,
    pub consumers: Vec<String>,
    /// `supplied[k][i]` at `times[k]` for consumer `i`
    pub supplied: Vec<Vec<f64>>,
    pub demanded: Vec<Vec<f64>>,
}

impl PerformanceSeries {
    pub fn new(network: Network, mode: CurveMode, consumers: Vec<String>) -> Self {
        PerformanceSeries {
            network,
            mode,
            times: Vec::new(),
            consumers,
            supplied: Vec::new(),
            demanded: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, supplied: Vec<f64>, demanded: Vec<f64>) {
        debug_assert!(self.times.last().is_none_or(|&t| time > t));
        debug_assert_eq!(supplied.len(), self.consumers.len());
        self.times.push(time);
        self.supplied.push(supplied);
        self.demanded.push(demanded);
    }

    pub fn ecs_curve(&self) -> Vec<Option<f64>> {
        self.supplied.iter().zip(&self.demanded).map(|(s, d)| ecs(s, d)).collect()
    }

    pub fn pcs_curve(&self) -> Vec<Option<f64>> {
        self.supplied.iter().zip(&self.demanded).map(|(s, d)| pcs(s, d)).collect()
    }

    pub fn curve(&self, mop: Mop) -> Vec<Option<f64>> {
        match mop {
            Mop::Ecs => self.ecs_curve(),
            Mop::Pcs => self.pcs_curve(),
        }
    }

    /// Value of `mop` at `t` under this series' interpolation mode.
    pub fn value_at(&self, mop: Mop, t: f64) -> Option<f64> {
        sample_curve(&self.times, &self.curve(mop), self.mode, t)
    }

    pub fn system_eoh(&self, mop: Mop, t0: f64, t_end: f64) -> Result<f64> {
        system_eoh(&self.times, &self.curve(mop), self.mode, t0, t_end)
    }

    /// EOH of consumer `i`; `None` when its normal demand is zero throughout.
    pub fn consumer_eoh(&self, i: usize, t0: f64, t_end: f64) -> Result<Option<f64>> {
        let ratio: Vec<Option<f64>> = self
            .supplied
            .iter()
            .zip(&self.demanded)
            .map(|(s, d)| (d[i] > 0.0).then(|| (s[i].max(0.0) / d[i]).min(1.0)))
            .collect();
        if ratio.iter().all(Option::is_none) {
            return Ok(None);
        }
        system_eoh(&self.times, &ratio, self.mode, t0, t_end).map(Some)
    }

    /// First sample time at or after `after` from which the curve stays at 1
    /// (within `tol`) to the end of the series.
    pub fn recovery_time(&self, mop: Mop, after: f64, tol: f64) -> Option<f64> {
        let curve = self.curve(mop);
        let mut found = None;
        for (k, &t) in self.times.iter().enumerate().rev() {
            if t < after {
                break;
            }
            match curve[k] {
                Some(v) if v >= 1.0 - tol => found = Some(t),
                None => {}
                _ => break,
            }
        }
        found
    }
}

fn sample_curve(times: &[f64], values: &[Option<f64>], mode: CurveMode, t: f64) -> Option<f64> {
    let k = times.partition_point(|&x| x <= t);
    if k == 0 {
        return None;
    }
    let a = k - 1;
    if times[a] == t || mode == CurveMode::Step || k == times.len() {
        return values[a];
    }
    let (va, vb) = (values[a]?, values[k]?);
    let w = (t - times[a]) / (times[k] - times[a]);
    Some(va + w * (vb - va))
}

/// `(1/3600) ∫_{t0}^{t_end} (1 - MOP) dt` in hours.
///
/// Linear curves use the trapezoidal rule (exact for piecewise-linear
/// curves); step curves are integrated exactly. Segments touching an
/// undefined sample are skipped. The curve must cover `[t0, t_end]`.
///
/// ```
/// use lifeline::metrics::{system_eoh, CurveMode};
/// let eoh = system_eoh(&[0.0, 7200.0], &[Some(0.5), Some(0.5)], CurveMode::Linear, 0.0, 7200.0).unwrap();
/// assert_eq!(eoh, 1.0);
/// ```
pub fn system_eoh(times: &[f64], values: &[Option<f64>], mode: CurveMode, t0: f64, t_end: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::InvalidInput("curve times and values differ in length".into()));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!("EOH window needs T > t0 (t0 = {t0}, T = {t_end})")));
    }
    match (times.first(), times.last()) {
        (Some(&first), Some(&last)) if first <= t0 && (last >= t_end || mode == CurveMode::Step) => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "curve does not cover [{t0}, {t_end}] s"
            )))
        }
    }
    let mut area = 0.0;
    for k in 0..times.len() {
        let a = times[k].max(t0);
        let b = if k + 1 < times.len() { times[k + 1].min(t_end) } else { t_end };
        if b <= a {
            continue;
        }
        match mode {
            CurveMode::Step => {
                if let Some(v) = values[k] {
                    area += (1.0 - v) * (b - a);
                }
            }
            CurveMode::Linear => {
                if k + 1 == times.len() {
                    continue;
                }
                let (Some(_), Some(_)) = (values[k], values[k + 1]) else { continue };
                let va = sample_curve(times, values, mode, a).expect("defined segment");
                let vb = sample_curve(times, values, mode, b).expect("defined segment");
                area += 0.5 * ((1.0 - va) + (1.0 - vb)) * (b - a);
            }
        }
    }
    Ok(area / 3600.0)
}

/// Water/power weights of the combined EOH.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EohWeights {
    pub water: f64,
    pub power: f64,
}

impl Default for EohWeights {
    fn default() -> Self {
        EohWeights { water: 0.5, power: 0.5 }
    }
}

/// `Σ w_K · EOH_K`.
///
/// ```
/// use lifeline::metrics::weighted_eoh;
/// assert_eq!(weighted_eoh(&[(2.0, 0.5), (4.0, 0.5)]), 3.0);
/// ```
pub fn weighted_eoh(eoh_and_weight: &[(f64, f64)]) -> f64 {
    eoh_and_weight.iter().map(|(e, w)| e * w).sum()
}
