use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::MovableObject;
use crate::tasks::{EpisodeStats, TaskKind};

/// Reference effort `M_ref` in kg·m.
pub const EFFORT_REFERENCE: f64 = 1.0;

/// Label attached to every output that reports effort efficiency.
pub const EFFORT_METRIC_LABEL: &str = "displacement-only surrogate";

/// Success weighted by path length: `success · ℓ / max(p, ℓ)`.
pub fn spl(success: bool, shortest: f64, actual: f64) -> Result<f64> {
    if !(shortest > 0.0) {
        return Err(Error::InvalidParam(format!("shortest path length must be positive, got {shortest}")));
    }
    if !(actual >= 0.0) {
        return Err(Error::InvalidParam(format!("path length must be non-negative, got {actual}")));
    }
    Ok(if success { shortest / actual.max(shortest) } else { 0.0 })
}

/// `1 / (1 + Σ mass·displacement / M_ref)`; 1 for an untouched scene.
pub fn effort_efficiency(objects: &[MovableObject]) -> f64 {
    effort_from_sum(objects.iter().map(|o| o.mass * o.total_displacement).sum())
}

pub fn effort_from_sum(mass_displacement: f64) -> f64 {
    1.0 / (1.0 + mass_displacement / EFFORT_REFERENCE)
}

/// Interactive navigation score: mean of SPL and effort efficiency.
pub fn ins(spl: f64, effort: f64) -> f64 {
    (spl + effort) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Success,
    StoppedEarly,
    PedestrianCollision,
    Timeout,
}

impl Termination {
    pub fn from_stats(s: &EpisodeStats) -> Self {
        if s.success {
            Termination::Success
        } else if s.ped_collision {
            Termination::PedestrianCollision
        } else if s.timeout {
            Termination::Timeout
        } else {
            Termination::StoppedEarly
        }
    }
}

/// Per-episode result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub scene_id: String,
    pub task: TaskKind,
    pub success: u8,
    pub spl: f64,
    pub effort_efficiency: f64,
    pub ins: f64,
    pub path_length: f64,
    pub shortest_length: f64,
    pub steps: u32,
    pub termination: Termination,
}

impl MetricsRecord {
    pub fn from_episode(episode: usize, scene_id: &str, task: TaskKind, stats: &EpisodeStats, objects: &[MovableObject]) -> Result<Self> {
        let s = spl(stats.success, stats.shortest_path_length, stats.path_length)?;
        let e = effort_efficiency(objects);
        Ok(MetricsRecord {
            episode,
            scene_id: scene_id.to_string(),
            task,
            success: u8::from(stats.success),
            spl: s,
            effort_efficiency: e,
            ins: ins(s, e),
            path_length: stats.path_length,
            shortest_length: stats.shortest_path_length,
            steps: stats.steps,
            termination: Termination::from_stats(stats),
        })
    }
}

/// Episode-level means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub success: f64,
    pub spl: f64,
    pub effort_efficiency: f64,
    pub ins: f64,
    pub path_length: f64,
    pub steps: f64,
}

pub fn aggregate(records: &[MetricsRecord]) -> Aggregate {
    if records.is_empty() {
        return Aggregate::default();
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Aggregate {
        episodes: records.len(),
        success: mean(&|r| f64::from(r.success)),
        spl: mean(&|r| r.spl),
        effort_efficiency: mean(&|r| r.effort_efficiency),
        ins: mean(&|r| r.ins),
        path_length: mean(&|r| r.path_length),
        steps: mean(&|r| f64::from(r.steps)),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanStd::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Seed-level mean ± std of each aggregate metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: usize,
    pub success: MeanStd,
    pub spl: MeanStd,
    pub effort_efficiency: MeanStd,
    pub ins: MeanStd,
}

pub fn summarize_seeds(per_seed: &[Aggregate]) -> SeedSummary {
    let col = |f: fn(&Aggregate) -> f64| MeanStd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    SeedSummary {
        seeds: per_seed.len(),
        success: col(|a| a.success),
        spl: col(|a| a.spl),
        effort_efficiency: col(|a| a.effort_efficiency),
        ins: col(|a| a.ins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;

    fn moved(mass: f64, d: f64) -> MovableObject {
        MovableObject {
            total_displacement: d,
            ..MovableObject::new(Vec2::new(0.0, 0.0), 0.1, mass)
        }
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(true, 5.0, 5.0).unwrap(), 1.0);
        assert_eq!(spl(true, 5.0, 10.0).unwrap(), 0.5);
        assert_eq!(spl(false, 5.0, 5.0).unwrap(), 0.0);
        assert_eq!(spl(true, 5.0, 2.0).unwrap(), 1.0);
        assert!(spl(true, 0.0, 1.0).is_err());
    }

    #[test]
    fn effort_examples() {
        assert_eq!(effort_efficiency(&[]), 1.0);
        assert_eq!(effort_efficiency(&[moved(1.0, 0.0)]), 1.0);
        assert_eq!(effort_efficiency(&[moved(1.0, 1.0)]), 0.5);
        assert_eq!(effort_efficiency(&[moved(1.0, 0.5), moved(2.0, 0.25)]), 0.5);
    }

    #[test]
    fn ins_examples() {
        assert_eq!(ins(1.0, 1.0), 1.0);
        assert_eq!(ins(0.0, 1.0), 0.5);
        assert_eq!(ins(0.5, 0.9), 0.7);
    }

    #[test]
    fn seed_summary_uses_population_std() {
        let a = |s| Aggregate {
            success: s,
            ..Default::default()
        };
        let s = summarize_seeds(&[a(0.5), a(0.7), a(0.6)]);
        assert!((s.success.mean - 0.6).abs() < 1e-12);
        assert!((s.success.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
