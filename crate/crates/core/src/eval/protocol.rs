use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, summarize_seeds, Aggregate, MetricsRecord, SeedSummary, EFFORT_METRIC_LABEL};
use super::run::{run_eval, EvalSetup};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scene::Scene;
use crate::tasks::EpisodeRecord;
use crate::train::{list_checkpoints, Checkpoint};

/// Seeds per configuration, selection split and reporting split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub seeds: usize,
    pub selection_split: String,
    pub reporting_split: String,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            seeds: 3,
            selection_split: "val1".into(),
            reporting_split: "val2".into(),
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidParam("protocol needs at least one seed".into()));
        }
        if self.selection_split == self.reporting_split {
            return Err(Error::InvalidParam("selection and reporting splits must differ".into()));
        }
        Ok(())
    }
}

/// Index of the highest success rate; ties go to the later entry.
/// `candidates` are `(step, success_rate)` in ascending step order.
pub fn select_best(candidates: &[(u64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(_, s)) in candidates.iter().enumerate() {
        if best.map_or(true, |b| s >= candidates[b].1) {
            best = Some(i);
        }
    }
    best
}

/// A checkpoint picked on the selection split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub step: u64,
    pub path: PathBuf,
    pub selection_success: f64,
    /// `(step, success)` of every candidate.
    pub candidates: Vec<(u64, f64)>,
}

/// Evaluates every checkpoint under `ckpt_dir` on the selection episodes
/// and returns the one with the highest success rate.
pub fn select_checkpoint(
    policy: &Policy,
    ckpt_dir: impl AsRef<Path>,
    scenes: &HashMap<String, Arc<Scene>>,
    selection: &[EpisodeRecord],
    setup: &EvalSetup,
) -> Result<Selection> {
    let dir = ckpt_dir.as_ref();
    let list = list_checkpoints(dir)?;
    if list.is_empty() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut candidates = Vec::with_capacity(list.len());
    for (step, path) in &list {
        let ck = Checkpoint::load(path, Some(policy.config().hash()))?;
        let agg = aggregate(&run_eval(policy, &ck.state.params, scenes, selection, setup)?);
        log::info!("checkpoint {step}: selection success {:.3}", agg.success);
        candidates.push((*step, agg.success));
    }
    let i = select_best(&candidates).expect("non-empty");
    Ok(Selection {
        step: list[i].0,
        path: list[i].1.clone(),
        selection_success: candidates[i].1,
        candidates,
    })
}

/// Reporting-split result of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub checkpoint_step: u64,
    pub selection_success: f64,
    pub aggregate: Aggregate,
}

/// JSON summary: per-seed aggregates and the seed-level mean ± std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub task: String,
    pub flavor: String,
    pub effort_metric: String,
    pub per_seed: Vec<SeedResult>,
    pub pooled: SeedSummary,
}

impl EvalSummary {
    pub fn new(label: &str, task: &str, flavor: &str, per_seed: Vec<SeedResult>) -> Self {
        let aggs: Vec<Aggregate> = per_seed.iter().map(|s| s.aggregate).collect();
        EvalSummary {
            label: label.into(),
            task: task.into(),
            flavor: flavor.into(),
            effort_metric: EFFORT_METRIC_LABEL.into(),
            pooled: summarize_seeds(&aggs),
            per_seed,
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// One CSV row per episode.
pub fn write_records_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Termination;
    use crate::tasks::TaskKind;

    #[test]
    fn best_checkpoint() {
        assert_eq!(select_best(&[]), None);
        assert_eq!(select_best(&[(1, 0.3)]), Some(0));
        assert_eq!(select_best(&[(1, 0.5), (2, 0.7), (3, 0.6)]), Some(1));
        assert_eq!(select_best(&[(1, 0.7), (2, 0.7)]), Some(1));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let policy = Policy::new(Default::default()).unwrap();
        let setup = EvalSetup::new(Default::default(), Default::default(), TaskKind::PointNav);
        let r = select_checkpoint(&policy, dir.path(), &HashMap::new(), &[], &setup);
        assert!(matches!(r, Err(Error::NotFound(_))));
    }

    #[test]
    fn outputs_round_trip_and_label() {
        let rec = MetricsRecord {
            episode: 0,
            scene_id: "s".into(),
            task: TaskKind::InteractiveNav,
            success: 1,
            spl: 0.8,
            effort_efficiency: 0.5,
            ins: 0.65,
            path_length: 3.0,
            shortest_length: 2.4,
            steps: 40,
            termination: Termination::Success,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_records_csv(&p, &[rec.clone()]).unwrap();
        assert_eq!(read_records_csv(&p).unwrap(), vec![rec.clone()]);
        let s = EvalSummary::new("none", "interactivenav", "scan", vec![]);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("displacement-only surrogate"));
        assert!(EvalProtocol::default().validate().is_ok());
    }
}
