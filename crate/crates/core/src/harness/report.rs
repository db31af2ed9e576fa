//! Experiment reports: a reproducible JSON document plus a CSV mirror, with
//! timing kept in a separate metadata record.

use super::{ExperimentSpec, GridPoint, SweepPoint, TrialResult};
use crate::funcs::catalog;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub label: String,
    pub sweep: Option<SweepPoint>,
    pub trials: usize,
    pub diverged: usize,
    pub mean_val_accuracy: Option<f64>,
    pub min_val_accuracy: Option<f64>,
    pub max_val_accuracy: Option<f64>,
    pub mean_eval_mode_train_loss: Option<f64>,
    pub min_eval_mode_train_loss: Option<f64>,
    pub max_eval_mode_train_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub catalog_hash: String,
    pub experiment_kind: String,
    pub master_seed: u64,
    pub repeats: usize,
    /// Effective configuration the run was started from.
    pub config: serde_json::Value,
    pub grid: Vec<GridPoint>,
    pub trials: Vec<TrialResult>,
    pub ranking: Vec<RankingRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub created_unix_secs: u64,
    pub total_wall_time_secs: f64,
    /// `(trial_id, seconds)`
    pub trial_wall_times: Vec<(usize, f64)>,
}

impl ReportMetadata {
    pub fn new(trials: &[TrialResult], total_wall_time_secs: f64) -> Self {
        ReportMetadata {
            created_unix_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            total_wall_time_secs,
            trial_wall_times: trials.iter().map(|t| (t.trial_id, t.wall_time)).collect(),
        }
    }
}

/// SHA-256 over every catalog entry's name, formula, group, declared
/// properties and values at a few fixed points.
pub fn catalog_hash() -> String {
    let mut h = Sha256::new();
    for f in catalog() {
        h.update(f.name().as_bytes());
        h.update(f.formula().as_bytes());
        h.update(f.group().to_string().as_bytes());
        h.update(format!("{:?}", f.declared_props()).as_bytes());
        for x in [-3.0, -1.0, -0.5, 0.0, 0.25, 1.0, 2.5] {
            h.update(f.eval(x).to_le_bytes());
            h.update(f.deriv(x).to_le_bytes());
        }
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(min), Some(max))
}

impl ExperimentReport {
    /// Groups trials by grid point and ranks points by mean validation
    /// accuracy (by mean evaluation-mode training loss for `fitloss`).
    /// Points whose every trial diverged rank last; ties keep grid order.
    pub fn new(spec: &ExperimentSpec, config: serde_json::Value, grid: Vec<GridPoint>, trials: Vec<TrialResult>) -> Self {
        let by_loss = spec.kind == super::ExperimentKind::Fitloss;
        let mut rows: Vec<(usize, RankingRow)> = grid
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let mine: Vec<&TrialResult> = trials
                    .iter()
                    .filter(|t| t.trial_id / spec.repeats.max(1) == pi)
                    .collect();
                let acc: Vec<f64> = mine.iter().filter_map(|t| t.val_accuracy).collect();
                let loss: Vec<f64> = mine.iter().filter_map(|t| t.eval_mode_train_loss).collect();
                let (ma, mina, maxa) = stats(&acc);
                let (ml, minl, maxl) = stats(&loss);
                (
                    pi,
                    RankingRow {
                        rank: 0,
                        label: p.label.clone(),
                        sweep: p.sweep.clone(),
                        trials: mine.len(),
                        diverged: mine.iter().filter(|t| t.diverged).count(),
                        mean_val_accuracy: ma,
                        min_val_accuracy: mina,
                        max_val_accuracy: maxa,
                        mean_eval_mode_train_loss: ml,
                        min_eval_mode_train_loss: minl,
                        max_eval_mode_train_loss: maxl,
                    },
                )
            })
            .collect();
        let key = |r: &RankingRow| -> Option<f64> {
            if by_loss {
                r.mean_eval_mode_train_loss
            } else {
                r.mean_val_accuracy.map(|a| -a)
            }
        };
        rows.sort_by(|(ia, a), (ib, b)| match (key(a), key(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(ia.cmp(ib)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => ia.cmp(ib),
        });
        let ranking = rows
            .into_iter()
            .enumerate()
            .map(|(i, (_, mut r))| {
                r.rank = i + 1;
                r
            })
            .collect();
        ExperimentReport {
            version: crate::VERSION.to_string(),
            catalog_hash: catalog_hash(),
            experiment_kind: spec.kind.as_str().to_string(),
            master_seed: spec.base.master_seed,
            repeats: spec.repeats,
            config,
            grid,
            trials,
            ranking,
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per trial.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "trial_id,label,sweep_param,sweep_value,repeat,seed,initial_loss,final_train_loss,eval_mode_train_loss,val_accuracy,diverged,steps_completed\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let fin = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
        for t in &self.trials {
            let (p, v) = t
                .sweep
                .as_ref()
                .map_or((String::new(), String::new()), |sp| (sp.param.clone(), sp.value.to_string()));
            let _ = writeln!(
                s,
                "{},\"{}\",{},{},{},{},{},{},{},{},{},{}",
                t.trial_id,
                t.label.replace('"', "\"\""),
                p,
                v,
                t.repeat,
                t.seed,
                fin(t.initial_loss),
                fin(t.final_train_loss),
                opt(t.eval_mode_train_loss),
                opt(t.val_accuracy),
                t.diverged,
                t.steps_completed
            );
        }
        s
    }

    /// Fixed-width ranking table for terminals.
    pub fn ranking_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4}  {:<36} {:>7} {:>9} {:>19} {:>10}",
            "rank", "point", "trials", "diverged", "val_acc (min..max)", "eval_loss"
        );
        for r in &self.ranking {
            let acc = match (r.mean_val_accuracy, r.min_val_accuracy, r.max_val_accuracy) {
                (Some(m), Some(lo), Some(hi)) => format!("{m:.4} ({lo:.3}..{hi:.3})"),
                _ => "x".into(),
            };
            let loss = r.mean_eval_mode_train_loss.map_or("x".into(), |l| format!("{l:.5}"));
            let _ = writeln!(
                s,
                "{:>4}  {:<36} {:>7} {:>9} {:>19} {:>10}",
                r.rank, r.label, r.trials, r.diverged, acc, loss
            );
        }
        s
    }
}
