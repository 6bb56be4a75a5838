//! Return curves and their aggregation across runs.

use super::Variant;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Global step at the end of the logging window.
    pub step: u64,
    /// Mean return of the episodes that finished inside the window.
    pub mean_return: f64,
    pub episodes: usize,
}

/// Returns of one training run. Windows in which no episode finished have no
/// point, so steps are strictly increasing but not always evenly spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnCurve {
    pub variant: Variant,
    pub seed: u64,
    pub total_steps: u64,
    pub log_interval: u64,
    pub points: Vec<CurvePoint>,
    /// `(global step at episode end, episode return)` for every episode.
    pub episodes: Vec<(u64, f64)>,
    /// Set when the run stopped early, e.g. on a non-finite loss.
    pub aborted: Option<String>,
}

impl ReturnCurve {
    pub fn from_episodes(
        variant: Variant,
        seed: u64,
        total_steps: u64,
        log_interval: u64,
        mut episodes: Vec<(u64, f64)>,
        aborted: Option<String>,
    ) -> Self {
        episodes.sort_by_key(|e| e.0);
        let interval = log_interval.max(1);
        let mut points = Vec::new();
        let mut i = 0;
        let mut end = interval.min(total_steps);
        loop {
            let (mut sum, mut n) = (0.0, 0);
            while i < episodes.len() && episodes[i].0 <= end {
                sum += episodes[i].1;
                n += 1;
                i += 1;
            }
            if n > 0 {
                points.push(CurvePoint {
                    step: end,
                    mean_return: sum / n as f64,
                    episodes: n,
                });
            }
            if end >= total_steps {
                break;
            }
            end = (end + interval).min(total_steps);
        }
        Self {
            variant,
            seed,
            total_steps,
            log_interval,
            points,
            episodes,
            aborted,
        }
    }

    /// Mean return of episodes ending in `(lo * total, hi * total]`.
    pub fn window_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let t = self.total_steps as f64;
        let rets: Vec<f64> = self
            .episodes
            .iter()
            .filter(|(s, _)| (*s as f64) > lo * t && (*s as f64) <= hi * t)
            .map(|(_, r)| *r)
            .collect();
        (!rets.is_empty()).then(|| rets.iter().sum::<f64>() / rets.len() as f64)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,mean_return,episodes")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.step, p.mean_return, p.episodes)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub step: u64,
    pub mean: f64,
    /// Population standard deviation across the runs that logged this step.
    pub std: f64,
    pub runs: usize,
}

/// Mean and spread of several runs' curves, aligned by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub variant: Option<Variant>,
    pub points: Vec<SummaryPoint>,
}

impl CurveSummary {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,mean,std")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.step, p.mean, p.std)?;
        }
        Ok(())
    }

    /// Plot-ready JSON: parallel arrays of steps, means and deviations.
    pub fn to_plot_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant.map(|v| v.name()),
            "step": self.points.iter().map(|p| p.step).collect::<Vec<_>>(),
            "mean": self.points.iter().map(|p| p.mean).collect::<Vec<_>>(),
            "std": self.points.iter().map(|p| p.std).collect::<Vec<_>>(),
        })
    }
}

pub fn aggregate_curves(curves: &[ReturnCurve]) -> CurveSummary {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for c in curves {
        for p in &c.points {
            by_step.entry(p.step).or_default().push(p.mean_return);
        }
    }
    let variant = curves.first().map(|c| c.variant).filter(|v| curves.iter().all(|c| c.variant == *v));
    let points = by_step
        .into_iter()
        .map(|(step, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            SummaryPoint {
                step,
                mean,
                std: var.sqrt(),
                runs: xs.len(),
            }
        })
        .collect();
    CurveSummary { variant, points }
}
