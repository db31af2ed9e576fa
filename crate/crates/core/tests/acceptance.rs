//! End-to-end acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

use derfkit::autodiff::Tape;
use derfkit::data::{make_synthetic_dataset, DatasetKind, DatasetSpec, Split};
use derfkit::funcs::{
    catalog, clip_bound, erf_eval, flat_zone, lookup, mix_linear, negate, shift, PointwiseFn, ShiftKind,
    TWO_OVER_SQRT_PI,
};
use derfkit::gradcheck::{central_diff, compare};
use derfkit::harness::{
    eval_mode_train_loss, run_experiment, train, train_mode_loss, DatasetSource, ExperimentKind, ExperimentReport,
    ExperimentSpec, Grid, TrainSpec,
};
use derfkit::layers::{init_layer, Layer, NormKind, NormLayer, NormSlot, ShiftMode};
use derfkit::model::{Mode, ToyBatch, ToyTransformer, ToyTransformerConfig};
use derfkit::numeric::adaptive_simpson;
use derfkit::optim::LrSchedule;
use derfkit::props::{classify, eps_objective, fit_eps, growth_ordering, EPS_BRACKET};
use derfkit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -------------------------------------------------------------------------

fn erf_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=1200 {
        let x = -6.0 + 12.0 * f64::from(i) / 1200.0;
        let oracle = TWO_OVER_SQRT_PI * adaptive_simpson(&|t: f64| (-t * t).exp(), 0.0, x, 1e-14);
        let v = erf_eval(x);
        worst = worst.max((v - oracle).abs());
        check(erf_eval(-x) == -v, || format!("oddness broken at x = {x}"))?;
    }
    check(worst <= 1e-10, || format!("max |erf - oracle| = {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e} over 1201 points, oddness exact"))
}

// 2 -------------------------------------------------------------------------

fn eps_fit() -> Outcome {
    let fit = fit_eps(8.0, 1e-6).map_err(|e| e.to_string())?;
    let (lo, hi) = EPS_BRACKET;
    let n = 10_000;
    let (mut best_x, mut best_v) = (lo, f64::INFINITY);
    for i in 0..n {
        let e = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        let v = eps_objective(e, 8.0);
        if v < best_v {
            best_v = v;
            best_x = e;
        }
    }
    check((1.195..=1.215).contains(&fit.eps_star), || {
        format!("eps* = {} outside [1.195, 1.215]", fit.eps_star)
    })?;
    check((fit.eps_star - best_x).abs() <= 1e-4, || {
        format!("golden {} vs grid {} differ by more than 1e-4", fit.eps_star, best_x)
    })?;
    Ok(format!("eps* = {:.7}, grid argmin {:.7}", fit.eps_star, best_x))
}

// 3 -------------------------------------------------------------------------

const REL: f64 = 1e-4;
const FLOOR: f64 = 1e-7;
const H: f64 = 1e-4;

/// Value of `sum(w ⊙ layer(x))` with the layer's parameters replaced by `ps`.
fn layer_loss(layer: &Layer, x: &Tensor, ps: &[Tensor], w: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv: Vec<_> = ps.iter().map(|p| tape.constant(p.clone())).collect();
    let y = layer.apply(&mut tape, xv, &pv).unwrap();
    tape.value(y).data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Inputs whose pre-activation `αx + s` keeps clear of the function's kinks
/// (derivative jumps or singular derivatives) and of the origin, where several
/// sign-based functions have a second-derivative jump.
fn safe_inputs(rng: &mut ChaCha8Rng, shape: &[usize], f: Option<(&PointwiseFn, f64, &[f64])>) -> Tensor {
    let mut x = uniform(rng, shape, -2.0, 2.0);
    let channels = *shape.last().unwrap();
    if let Some((f, alpha, s)) = f {
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let shift = if s.len() == 1 { s[0] } else if s.is_empty() { 0.0 } else { s[i % channels] };
            while f.distance_to_kink(alpha * *v + shift) < 0.05 || (alpha * *v + shift).abs() < 1e-3 {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
    }
    x
}

fn check_layer(slot: &NormSlot, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 4;
    let mut layer = init_layer(slot, c, 0.5, 1e-5).map_err(|e| e.to_string())?;
    for (name, t) in layer.params_mut() {
        let fresh = match name {
            "gamma" => uniform(&mut rng, t.shape(), 0.5, 1.5),
            "beta" => uniform(&mut rng, t.shape(), -0.5, 0.5),
            "alpha" => uniform(&mut rng, t.shape(), 0.3, 1.5),
            _ => uniform(&mut rng, t.shape(), -0.3, 0.3),
        };
        *t = fresh;
    }
    let shape = [2, 3, c];
    let x = match &layer {
        Layer::Dynamic(d) => {
            let s = d.s.as_ref().map_or(Vec::new(), |s| s.data().to_vec());
            safe_inputs(&mut rng, &shape, Some((&d.f, d.alpha.data()[0], &s)))
        }
        Layer::Norm(_) => safe_inputs(&mut rng, &shape, None),
    };
    let w = uniform(&mut rng, &shape, -1.0, 1.0);
    let ps: Vec<Tensor> = layer.params().into_iter().map(|(_, t)| t.clone()).collect();

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let pv: Vec<_> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
    let y = layer.apply(&mut tape, xv, &pv).map_err(|e| e.to_string())?;
    let wv = tape.constant(w.clone());
    let prod = tape.mul(y, wv).map_err(|e| e.to_string())?;
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;

    let label = slot.label();
    let num_x = central_diff(|xp| layer_loss(&layer, xp, &ps, &w), &x, H);
    compare(&grads.get_or_zeros(xv, &x), &num_x, REL, FLOOR)
        .map_err(|m| format!("{label} seed {seed}: d/dx {m:?}"))?;
    for (k, (name, p)) in layer.params().into_iter().enumerate() {
        let num = central_diff(
            |pp| {
                let mut q = ps.clone();
                q[k] = pp.clone();
                layer_loss(&layer, &x, &q, &w)
            },
            p,
            H,
        );
        compare(&grads.get_or_zeros(pv[k], p), &num, REL, FLOOR)
            .map_err(|m| format!("{label} seed {seed}: d/d{name} {m:?}"))?;
    }
    Ok(())
}

fn model_gradcheck() -> Result<(), String> {
    for slot in [NormSlot::LayerNorm, NormSlot::Derf] {
        let cfg = ToyTransformerConfig {
            depth: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            seq_len: 3,
            input_dim: 4,
            n_classes: 3,
            norm_slot: slot.clone(),
            seed: 5,
            ..Default::default()
        };
        let mut model = ToyTransformer::build(cfg).unwrap();
        // Spread the weights so that every gradient is well above round-off.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in model.params_mut() {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let inputs = uniform(&mut rng, &[2, 3, 4], -2.0, 2.0);
        let batch = ToyBatch::new(inputs, vec![0, 2]).unwrap();
        let (_, analytic) = model.loss_and_grads(&batch, Mode::Eval).map_err(|e| e.to_string())?;
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        for (k, name) in names.iter().enumerate() {
            let p0 = model.params()[k].1.clone();
            let num = central_diff(
                |pp| {
                    let mut m = model.clone();
                    *m.params_mut()[k] = pp.clone();
                    m.loss(&batch, Mode::Eval).unwrap()
                },
                &p0,
                H,
            );
            compare(&analytic[k], &num, 1e-3, FLOOR).map_err(|m| format!("model[{}] {name}: {m:?}", slot.label()))?;
        }
    }
    Ok(())
}

fn gradient_suite() -> Outcome {
    let mut slots = vec![NormSlot::LayerNorm, NormSlot::RmsNorm, NormSlot::Dyt, NormSlot::Derf];
    for f in catalog() {
        slots.push(NormSlot::dynamic(f.name(), ShiftMode::Scalar));
    }
    slots.push(NormSlot::dynamic("erf", ShiftMode::PerChannel));
    slots.push(NormSlot::dynamic("erf", ShiftMode::Absent));
    for slot in &slots {
        for seed in 0..20 {
            check_layer(slot, seed)?;
        }
    }
    // RMSNorm with the optional β.
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = Layer::Norm(NormLayer {
            kind: NormKind::RmsNorm,
            gamma: uniform(&mut rng, &[4], 0.5, 1.5),
            beta: Some(uniform(&mut rng, &[4], -0.5, 0.5)),
            epsilon: 1e-5,
        });
        let x = uniform(&mut rng, &[3, 4], -2.0, 2.0);
        let w = uniform(&mut rng, &[3, 4], -1.0, 1.0);
        let ps: Vec<Tensor> = layer.params().into_iter().map(|(_, t)| t.clone()).collect();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let pv: Vec<_> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let y = layer.apply(&mut tape, xv, &pv).unwrap();
        let wv = tape.constant(w.clone());
        let prod = tape.mul(y, wv).unwrap();
        let loss = tape.sum(prod);
        let g = tape.backward(loss).unwrap();
        let num = central_diff(|xp| layer_loss(&layer, xp, &ps, &w), &x, H);
        compare(&g.get_or_zeros(xv, &x), &num, REL, FLOOR).map_err(|m| format!("rms+beta: {m:?}"))?;
    }
    model_gradcheck()?;
    Ok(format!(
        "{} layer kinds x 20 seeds at 1e-4 rel, depth-1 model at 1e-3 rel",
        slots.len() + 1
    ))
}

// 4 -------------------------------------------------------------------------

fn golden_labels() -> Outcome {
    let all = catalog();
    for f in &all {
        let r = classify(f).map_err(|e| e.to_string())?;
        let bad = r.mismatches(&f.declared_props());
        check(bad.is_empty(), || format!("{}: measured {:?} differ from declared", f.name(), bad))?;
    }
    let probes: Vec<PointwiseFn> = ["linear", "power23", "logquad", "logsign"]
        .iter()
        .map(|n| lookup(n).unwrap())
        .collect();
    let order: Vec<String> = growth_ordering(&probes)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.function)
        .collect();
    check(order == ["logsign", "logquad", "power23", "linear"], || format!("growth order {order:?}"))?;
    Ok(format!("{} entries match; growth order {}", all.len(), order.join(" < ")))
}

// 5 -------------------------------------------------------------------------

fn construction_identities() -> Outcome {
    let xs: Vec<f64> = (0..=20_000).map(|i| -10.0 + 1e-3 * f64::from(i)).collect();
    let same = |a: &PointwiseFn, b: &PointwiseFn, what: &str| -> Result<(), String> {
        for &x in &xs {
            if a.eval(x) != b.eval(x) || a.deriv(x) != b.deriv(x) {
                return Err(format!("{what} differs from {} at x = {x}", b.name()));
            }
        }
        Ok(())
    };
    let mut n = 0;
    for f in catalog() {
        same(&shift(&f, ShiftKind::Horizontal, 0.0), &f, "hshift(·,0)")?;
        same(&shift(&f, ShiftKind::Vertical, 0.0), &f, "vshift(·,0)")?;
        same(&negate(&negate(&f)), &f, "neg(neg(·))")?;
        if let Ok(flat) = flat_zone(&f, 0.0) {
            same(&flat, &f, "flat(·,0)")?;
        }
        for lam in [0.3, 0.5, 1.0, 2.0] {
            let c = clip_bound(&f, lam).map_err(|e| e.to_string())?;
            for &x in &xs {
                check(c.eval(x).abs() <= lam, || format!("clip({},{lam}) = {} at {x}", f.name(), c.eval(x)))?;
            }
        }
        if f.declared_props().bounded {
            let mut prev = f64::INFINITY;
            for lam in [1e-3, 1e-6, 1e-9, 1e-11] {
                let m = mix_linear(&f, lam).map_err(|e| e.to_string())?;
                let dev = xs.iter().map(|&x| (m.eval(x) - f.eval(x)).abs()).fold(0.0, f64::max);
                check(dev <= prev, || format!("mix({},λ) not converging", f.name()))?;
                prev = dev;
            }
            check(prev <= 1e-9, || format!("mix({},1e-11) deviates by {prev:e}", f.name()))?;
        }
        n += 1;
    }
    Ok(format!("{n} functions on a 20 001-point grid"))
}

// 6 -------------------------------------------------------------------------

fn tiny_train_spec(slot: NormSlot, steps: usize) -> TrainSpec {
    TrainSpec {
        model: ToyTransformerConfig {
            depth: 1,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            seq_len: 6,
            input_dim: 6,
            n_classes: 2,
            norm_slot: slot,
            drop_path_rate: 0.1,
            ..Default::default()
        },
        steps,
        batch_size: 16,
        warmup_steps: 5,
        dataset: DatasetSource::Generate(DatasetSpec {
            n_train: 128,
            n_val: 64,
            seq_len: 6,
            input_dim: 6,
            seed: 4,
            ..Default::default()
        }),
        master_seed: 21,
        ..Default::default()
    }
}

fn determinism() -> Outcome {
    let spec = tiny_train_spec(NormSlot::Derf, 40);
    let a = train(&spec).map_err(|e| e.to_string())?.result;
    let b = train(&spec).map_err(|e| e.to_string())?.result;
    let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    check(bits(&a.loss_history) == bits(&b.loss_history), || "loss curves differ".into())?;

    let exp = ExperimentSpec {
        kind: ExperimentKind::Search,
        base: tiny_train_spec(NormSlot::Derf, 15),
        grid: Grid {
            functions: vec!["erf".into(), "tanh".into(), "isru".into()],
            ..Default::default()
        },
        repeats: 2,
    };
    let cfg = serde_json::to_value(&exp).unwrap();
    let grid = exp.validate().map_err(|e| e.to_string())?;
    let seq = run_experiment(&exp, Some(1), None).map_err(|e| e.to_string())?;
    let par = run_experiment(&exp, Some(3), None).map_err(|e| e.to_string())?;
    let j1 = ExperimentReport::new(&exp, cfg.clone(), grid.clone(), seq).to_json().unwrap();
    let j2 = ExperimentReport::new(&exp, cfg, grid, par).to_json().unwrap();
    check(j1 == j2, || "sequential and parallel reports differ".into())?;
    Ok(format!("identical loss curves; {}-byte report identical across schedules", j1.len()))
}

// 7 -------------------------------------------------------------------------

fn cluster_spec(slot: NormSlot) -> TrainSpec {
    TrainSpec {
        model: ToyTransformerConfig {
            depth: 2,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            seq_len: 8,
            input_dim: 8,
            n_classes: 2,
            norm_slot: slot,
            seed: 1,
            ..Default::default()
        },
        steps: 300,
        batch_size: 32,
        warmup_steps: 20,
        lr_schedule: LrSchedule::Cosine,
        dataset: DatasetSource::Generate(DatasetSpec {
            kind: DatasetKind::ClusterTokens,
            n_train: 512,
            n_val: 256,
            seq_len: 8,
            input_dim: 8,
            margin: 3.0,
            seed: 7,
            ..Default::default()
        }),
        master_seed: 3,
        ..Default::default()
    }
}

fn learnability() -> Outcome {
    let mut accs = Vec::new();
    let mut ln_model = None;
    for slot in [NormSlot::LayerNorm, NormSlot::RmsNorm, NormSlot::Dyt, NormSlot::Derf] {
        let spec = cluster_spec(slot.clone());
        check(spec.steps <= 1000, || "step budget exceeded".into())?;
        let out = train(&spec).map_err(|e| e.to_string())?;
        let acc = out.result.val_accuracy.unwrap_or(0.0);
        check(!out.result.diverged && acc >= 0.95, || format!("{}: val accuracy {acc}", slot.label()))?;
        accs.push(format!("{} {acc:.3}", slot.label()));
        if slot == NormSlot::LayerNorm {
            ln_model = Some(out.model);
        }
    }
    // The normalized LayerNorm output of real activations has zero per-token mean.
    let model = ln_model.unwrap();
    let spec = cluster_spec(NormSlot::LayerNorm);
    let DatasetSource::Generate(ds) = &spec.dataset else { unreachable!() };
    let data = make_synthetic_dataset(ds, Split::Train).unwrap();
    let x = data.inputs.reshape(&[data.len() * 8, 8]).unwrap();
    let h = x.matmul(&model.embed.weight).unwrap();
    let layer = NormLayer::new(NormKind::LayerNorm, 32, 1e-5, true).unwrap();
    let y = Layer::Norm(layer).forward(&h).unwrap();
    let worst = y
        .data()
        .chunks(32)
        .map(|row| (row.iter().sum::<f64>() / 32.0).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-10, || format!("LayerNorm per-token mean {worst:e}"))?;
    Ok(format!("{}; LN token mean <= {worst:.1e}", accs.join(", ")))
}

// 8 -------------------------------------------------------------------------

fn eval_mode_protocol() -> Outcome {
    let mut spec = cluster_spec(NormSlot::Derf);
    spec.model.n_classes = 4;
    spec.model.drop_path_rate = 0.2;
    if let DatasetSource::Generate(d) = &mut spec.dataset {
        d.n_classes = 4;
    }
    let DatasetSource::Generate(ds) = spec.dataset.clone() else { unreachable!() };
    let data = make_synthetic_dataset(&ds, Split::Train).unwrap();

    let fresh = ToyTransformer::build(spec.model.clone()).unwrap();
    let l0 = eval_mode_train_loss(&fresh, &data, 64, None).map_err(|e| e.to_string())?;
    let l0b = eval_mode_train_loss(&fresh, &data, 64, None).map_err(|e| e.to_string())?;
    check(l0.to_bits() == l0b.to_bits(), || "eval-mode loss not deterministic".into())?;
    check((l0 - 4f64.ln()).abs() <= 0.1, || format!("initial loss {l0} vs ln 4"))?;

    let trained = train(&spec).map_err(|e| e.to_string())?.model;
    let eval = eval_mode_train_loss(&trained, &data, 64, None).map_err(|e| e.to_string())?;
    let again = eval_mode_train_loss(&trained, &data, 64, None).map_err(|e| e.to_string())?;
    check(eval.to_bits() == again.to_bits(), || "eval-mode loss not deterministic".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let train_mode = train_mode_loss(&trained, &data, 64, None, &mut rng).map_err(|e| e.to_string())?;
    check(eval <= train_mode, || format!("eval-mode {eval} > train-mode {train_mode}"))?;
    Ok(format!(
        "init {l0:.4} (ln 4 = {:.4}); trained eval {eval:.4} <= train-mode {train_mode:.4}",
        4f64.ln()
    ))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("erf fidelity", erf_fidelity, Duration::from_secs(1)),
        ("eps-fit reproduction", eps_fit, Duration::from_secs(5)),
        ("gradient suite", gradient_suite, Duration::from_secs(30)),
        ("golden property labels", golden_labels, Duration::from_secs(10)),
        ("construction identities", construction_identities, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(120)),
        ("desk-scale learnability", learnability, Duration::from_secs(300)),
        ("eval-mode loss protocol", eval_mode_protocol, Duration::from_secs(60)),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.2?}, budget {budget:?}")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {}: {:<26} {} [{:.2?}] {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            took,
            detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
