//! Declarative experiments: a base training spec, a grid of function or slot
//! variations, and a number of repeats per grid point.

use super::{train_on, TrainSpec, TrialResult};
use crate::error::{Error, Result};
use crate::funcs::{lookup, search_candidates, FuncSpec, ShiftKind, Transform};
use crate::layers::{NormSlot, ShiftMode};
use crate::model::ToyTransformer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Search,
    ShiftSweep,
    BoundSweep,
    MixSweep,
    FlatSweep,
    MonotonicCompare,
    GrowthProbe,
    SAblation,
    EpsTanhCompare,
    Fitloss,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Search => "search",
            ExperimentKind::ShiftSweep => "shift_sweep",
            ExperimentKind::BoundSweep => "bound_sweep",
            ExperimentKind::MixSweep => "mix_sweep",
            ExperimentKind::FlatSweep => "flat_sweep",
            ExperimentKind::MonotonicCompare => "monotonic_compare",
            ExperimentKind::GrowthProbe => "growth_probe",
            ExperimentKind::SAblation => "s_ablation",
            ExperimentKind::EpsTanhCompare => "eps_tanh_compare",
            ExperimentKind::Fitloss => "fitloss",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        use ExperimentKind::*;
        match self {
            Search | MonotonicCompare | GrowthProbe => &["functions"],
            ShiftSweep => &["functions", "lambdas", "shift_kind", "baseline"],
            BoundSweep | MixSweep | FlatSweep => &["functions", "lambdas", "baseline"],
            SAblation => &["functions", "s_modes"],
            EpsTanhCompare => &["functions", "lambdas"],
            Fitloss => &["slots"],
        }
    }

    fn default_functions(self) -> &'static [&'static str] {
        use ExperimentKind::*;
        match self {
            ShiftSweep | FlatSweep => &["erf", "tanh", "arctan"],
            BoundSweep => &["arcsinh", "logsign", "linear"],
            MixSweep => &["erf", "tanh", "arctan", "isru"],
            MonotonicCompare => &["erf", "tanh"],
            GrowthProbe => &["logsign", "arcsinh", "logquad", "power23", "linear"],
            SAblation | EpsTanhCompare => &["erf"],
            Search | Fitloss => &[],
        }
    }

    fn default_lambdas(self) -> &'static [f64] {
        use ExperimentKind::*;
        match self {
            ShiftSweep => &[-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0],
            BoundSweep => &[0.5, 0.8, 1.0, 2.0, 3.0, 5.0],
            MixSweep => &[0.01, 0.1, 0.5],
            FlatSweep => &[0.1, 0.5, 1.0, 2.0, 3.0],
            EpsTanhCompare => &[1.0, 1.205],
            _ => &[],
        }
    }
}

/// The variation axes of an experiment. Empty axes fall back to the kind's
/// defaults; axes the kind does not use must stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    /// Catalog names; `["all"]` in a search means every search candidate.
    pub functions: Vec<String>,
    pub lambdas: Vec<f64>,
    pub shift_kind: Option<ShiftKind>,
    pub s_modes: Vec<ShiftMode>,
    pub slots: Vec<NormSlot>,
    /// Whether sweeps add the untransformed base function. Default true.
    pub baseline: Option<bool>,
}

impl Grid {
    fn set_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.functions.is_empty() {
            v.push("functions");
        }
        if !self.lambdas.is_empty() {
            v.push("lambdas");
        }
        if self.shift_kind.is_some() {
            v.push("shift_kind");
        }
        if !self.s_modes.is_empty() {
            v.push("s_modes");
        }
        if !self.slots.is_empty() {
            v.push("slots");
        }
        if self.baseline.is_some() {
            v.push("baseline");
        }
        v
    }
}

/// Which transformation parameter a sweep point sets, and to what.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub base: String,
    pub param: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    pub slot: NormSlot,
    pub sweep: Option<SweepPoint>,
}

fn fn_point(spec: FuncSpec, s_mode: ShiftMode, sweep: Option<SweepPoint>) -> GridPoint {
    let slot = NormSlot::Dynamic { func: spec, s_mode };
    GridPoint {
        label: slot.label(),
        slot,
        sweep,
    }
}

fn named(name: &str) -> GridPoint {
    fn_point(FuncSpec::named(name), ShiftMode::Scalar, None)
}

/// The grid points of an experiment, in a fixed order.
pub fn expand_grid(kind: ExperimentKind, grid: &Grid) -> Result<Vec<GridPoint>> {
    let illegal: Vec<String> = grid
        .set_fields()
        .into_iter()
        .filter(|f| !kind.allowed().contains(f))
        .map(|f| format!("grid.{f} is not a valid axis for {}", kind.as_str()))
        .collect();
    if !illegal.is_empty() {
        return Err(Error::Config(illegal));
    }
    let functions: Vec<String> = if grid.functions.is_empty() {
        kind.default_functions().iter().map(|s| s.to_string()).collect()
    } else if grid.functions.len() == 1 && grid.functions[0] == "all" {
        search_candidates().iter().map(|f| f.name().to_string()).collect()
    } else {
        grid.functions.clone()
    };
    for f in &functions {
        lookup(f)?;
    }
    let lambdas = if grid.lambdas.is_empty() {
        kind.default_lambdas().to_vec()
    } else {
        grid.lambdas.clone()
    };
    let baseline = grid.baseline.unwrap_or(true);

    let sweep = |param: &str, make: &dyn Fn(FuncSpec, f64) -> Transform| -> Vec<GridPoint> {
        let mut pts = Vec::new();
        for f in &functions {
            if baseline {
                pts.push(named(f));
            }
            for &l in &lambdas {
                let spec = FuncSpec::transformed(make(FuncSpec::named(f.clone()), l));
                let sp = SweepPoint {
                    base: f.clone(),
                    param: param.to_string(),
                    value: l,
                };
                pts.push(fn_point(spec, ShiftMode::Scalar, Some(sp)));
            }
        }
        pts
    };

    let points = match kind {
        ExperimentKind::Search | ExperimentKind::GrowthProbe => {
            if functions.is_empty() {
                return Err(Error::Config(vec!["search needs grid.functions (or [\"all\"])".into()]));
            }
            functions.iter().map(|f| named(f)).collect()
        }
        ExperimentKind::ShiftSweep => {
            let sk = grid.shift_kind.unwrap_or(ShiftKind::Horizontal);
            let param = match sk {
                ShiftKind::Horizontal => "lambda_horiz",
                ShiftKind::Vertical => "lambda_vert",
            };
            sweep(param, &|base, lambda| Transform::Shift { base, kind: sk, lambda })
        }
        ExperimentKind::BoundSweep => sweep("lambda_u", &|base, lambda_u| Transform::Clip { base, lambda_u }),
        ExperimentKind::MixSweep => sweep("lambda_b", &|base, lambda_b| Transform::Mix { base, lambda_b }),
        ExperimentKind::FlatSweep => sweep("lambda_flat", &|base, lambda_flat| Transform::Flat { base, lambda_flat }),
        ExperimentKind::MonotonicCompare => functions
            .iter()
            .flat_map(|f| {
                let neg = FuncSpec::transformed(Transform::Negate {
                    base: FuncSpec::named(f.clone()),
                });
                [named(f), fn_point(neg, ShiftMode::Scalar, None)]
            })
            .collect(),
        ExperimentKind::SAblation => {
            let modes = if grid.s_modes.is_empty() {
                vec![ShiftMode::Absent, ShiftMode::Scalar, ShiftMode::PerChannel]
            } else {
                grid.s_modes.clone()
            };
            functions
                .iter()
                .flat_map(|f| modes.iter().map(move |&m| fn_point(FuncSpec::named(f.clone()), m, None)))
                .collect()
        }
        ExperimentKind::EpsTanhCompare => {
            let mut pts: Vec<GridPoint> = functions.iter().map(|f| named(f)).collect();
            for &e in &lambdas {
                let spec = FuncSpec::transformed(Transform::ScaledTanh { eps_tanh: e });
                let sp = SweepPoint {
                    base: "tanh".into(),
                    param: "eps_tanh".into(),
                    value: e,
                };
                pts.push(fn_point(spec, ShiftMode::Scalar, Some(sp)));
            }
            pts
        }
        ExperimentKind::Fitloss => {
            let slots = if grid.slots.is_empty() {
                vec![NormSlot::LayerNorm, NormSlot::Dyt, NormSlot::Derf]
            } else {
                grid.slots.clone()
            };
            slots
                .into_iter()
                .map(|slot| GridPoint {
                    label: slot.label(),
                    slot,
                    sweep: None,
                })
                .collect()
        }
    };
    if points.is_empty() {
        return Err(Error::Config(vec![format!("{} grid is empty", kind.as_str())]));
    }
    // Surface bad transformation parameters before any training starts.
    let mut bad = Vec::new();
    for p in &points {
        if let NormSlot::Dynamic { func, .. } = &p.slot {
            if let Err(e) = func.resolve() {
                bad.push(format!("grid point {}: {e}", p.label));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    Ok(points)
}

fn default_repeats() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub base: TrainSpec,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<Vec<GridPoint>> {
        let mut v = self.base.violations();
        if self.repeats == 0 {
            v.push("repeats must be >= 1".into());
        }
        let points = match expand_grid(self.kind, &self.grid) {
            Ok(p) => p,
            Err(Error::Config(e)) => {
                v.extend(e);
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        if v.is_empty() {
            Ok(points)
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Seed of repeat `repeat`: a SplitMix64 mix of the master seed and the
/// repeat index. Every grid point of one repeat shares it, so points differ
/// only in the function under study.
pub fn trial_seed(master_seed: u64, repeat: usize) -> u64 {
    let mut z = master_seed ^ (repeat as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type TrialHook<'a> = &'a (dyn Fn(&TrialResult, &ToyTransformer) -> Result<()> + Sync);

/// Runs every grid point × repeat. Trial `i` is point `i / repeats`, repeat
/// `i % repeats`. `threads = Some(1)` runs sequentially; otherwise trials run
/// on a rayon pool of the given size (all cores when `None`). Results come
/// back sorted by trial id whatever the schedule. `hook` sees each finished
/// trial with its trained model.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>, hook: Option<TrialHook<'_>>) -> Result<Vec<TrialResult>> {
    let points = spec.validate()?;
    let (train_set, val_set) = spec.base.dataset.load()?;
    let jobs: Vec<(usize, &GridPoint, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..spec.repeats).map(move |r| (pi * spec.repeats + r, p, r)))
        .collect();
    let run = |&(id, point, repeat): &(usize, &GridPoint, usize)| -> Result<TrialResult> {
        let seed = trial_seed(spec.base.master_seed, repeat);
        let mut ts = spec.base.clone();
        ts.model.norm_slot = point.slot.clone();
        ts.model.seed = seed;
        ts.master_seed = seed;
        let out = train_on(&ts, &train_set, &val_set, &point.label, point.sweep.clone(), id, repeat)?;
        if let Some(h) = hook {
            h(&out.result, &out.model)?;
        }
        Ok(out.result)
    };
    let mut results: Vec<TrialResult> = match threads {
        Some(1) => jobs.iter().map(run).collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run).collect::<Result<_>>())?,
        None => jobs.par_iter().map(run).collect::<Result<_>>()?,
    };
    results.sort_by_key(|r| r.trial_id);
    Ok(results)
}
