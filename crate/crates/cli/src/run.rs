//! Experiment execution. Each experiment validates its inputs, then maps
//! the grid to rows in parallel; rows come back in grid order.

use ergolab::estimators::{
    alpha_rate, gamma_sup, sample_uniform_point, smoothed_sum_audit, twisted_average, vprop1_audit,
    weighted_sparse_sum, InnerProduct, VpropSettings,
};
use ergolab::expsum::{analytic_weyl_bound, power_sequence, random_weights, weyl_sum, y_statistic, WeightDist, WeightedSampleSet};
use ergolab::rates::{derived_exponents, sparse_exponent, sparse_window, twist_exponent};
use ergolab::{StatePoint, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{self, AlphaMode, Experiment, ExperimentConfig, PointSpec};
use crate::error::{CliError, CliResult};
use crate::output::Stat;
use crate::report;

/// Rows computed before the first failure, and that failure.
pub struct Outcome {
    pub stats: Vec<Stat>,
    pub failure: Option<CliError>,
}

/// Result of a run: CSV rows or a JSON document.
pub enum Artifact {
    Rows(Outcome),
    Json(serde_json::Value),
}

/// Per-grid-point seed derived from the run seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

type Job<'a> = Box<dyn Fn(usize, f64) -> CliResult<Vec<Stat>> + Send + Sync + 'a>;

fn over_grid(grid: &[f64], job: Job) -> Outcome {
    let results: Vec<CliResult<Vec<Stat>>> = grid.par_iter().enumerate().map(|(i, &t)| job(i, t)).collect();
    let mut stats = Vec::new();
    for r in results {
        match r {
            Ok(rows) => stats.extend(rows),
            Err(e) => return Outcome { stats, failure: Some(e) },
        }
    }
    Outcome { stats, failure: None }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// The starting point: explicit, or drawn from the run seed.
fn point(cfg: &ExperimentConfig, sys: &SystemSpec, index: u64) -> CliResult<StatePoint> {
    match &cfg.point {
        Some(PointSpec::Coords(c)) => {
            if c.len() != sys.phase_dim() {
                return Err(invalid(format!("point has {} coordinates, system needs {}", c.len(), sys.phase_dim())));
            }
            Ok(sys.point(c.clone()))
        }
        Some(PointSpec::State(p)) => {
            if p.dim() != sys.phase_dim() || p.height.is_some() != sys.has_height() {
                return Err(invalid("point does not match the system's phase space"));
            }
            Ok(p.clone())
        }
        Some(PointSpec::Keyword(k)) if k != "random" => Err(invalid(format!("point must be coordinates or \"random\", got {k:?}"))),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX - index));
            Ok(sample_uniform_point(sys, &mut rng))
        }
    }
}

fn random_points(cfg: &ExperimentConfig, sys: &SystemSpec, n: usize) -> CliResult<Vec<StatePoint>> {
    if n == 0 {
        return Err(invalid("need at least one point"));
    }
    match &cfg.point {
        Some(PointSpec::Keyword(_)) | None => (0..n as u64).map(|i| point(cfg, sys, i)).collect(),
        Some(_) if n == 1 => Ok(vec![point(cfg, sys, 0)?]),
        Some(_) => Err(invalid("several points requested but the config fixes one")),
    }
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Artifact> {
    match cfg.experiment {
        Experiment::Twisted => twisted(cfg).map(Artifact::Rows),
        Experiment::Beta => beta(cfg).map(Artifact::Rows),
        Experiment::Alpha => alpha(cfg).map(Artifact::Rows),
        Experiment::Sparse => sparse(cfg).map(Artifact::Rows),
        Experiment::Weights => weights(cfg).map(Artifact::Rows),
        Experiment::AuditVprop1 => audit_vprop1(cfg).map(Artifact::Rows),
        Experiment::ExpsumOracle => expsum_oracle(cfg).map(Artifact::Rows),
        Experiment::RatesCalc => rates_calc(cfg).map(Artifact::Json),
        Experiment::RatesFit => rates_fit(cfg).map(Artifact::Rows),
    }
}

fn twisted(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let f = cfg.observable(sys)?;
    let p: config::TwistedParams = config::params(&cfg.params)?;
    let grid = cfg.grid(sys.is_discrete())?;
    if let Some(a) = &p.a {
        if a.len() != sys.group_dim() {
            return Err(invalid(format!("twist has {} entries, system acts by a {}-dimensional group", a.len(), sys.group_dim())));
        }
    }
    let x = point(cfg, sys, 0)?;
    Ok(over_grid(
        &grid,
        Box::new(move |_, t| {
            Ok(match &p.a {
                Some(a) => {
                    let v = twisted_average(sys, &f, &x, t, a, &p.quad)?;
                    vec![Stat::new(t, "twisted_abs", v.norm()).aux("re", v.re).aux("im", v.im)]
                }
                None => {
                    let g = gamma_sup(sys, &f, &x, t, &p.gamma, &p.quad)?;
                    vec![Stat::new(t, "gamma", g.value)
                        .aux("argmax1", g.argmax[0])
                        .aux("resolution", g.resolution)
                        .aux("moved", if g.moved { 1.0 } else { 0.0 })]
                }
            })
        }),
    ))
}

fn beta(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let f = cfg.observable(sys)?;
    let p: config::BetaParams = config::params(&cfg.params)?;
    let grid = cfg.grid(sys.is_discrete())?;
    let xs = random_points(cfg, sys, p.samples)?;
    let mean = f.mean();
    let zero = vec![0.0; sys.group_dim()];
    Ok(over_grid(
        &grid,
        Box::new(move |_, t| {
            let vals: Vec<f64> = xs
                .iter()
                .map(|x| Ok((twisted_average(sys, &f, x, t, &zero, &p.quad)? - mean).norm()))
                .collect::<CliResult<_>>()?;
            let n = vals.len() as f64;
            let avg = vals.iter().sum::<f64>() / n;
            let max = vals.iter().cloned().fold(0.0, f64::max);
            Ok(vec![Stat::new(t, "beta", avg).aux("max", max).aux("samples", n)])
        }),
    ))
}

fn alpha(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let list = cfg.observable_list();
    if list.is_empty() || list.len() > 2 {
        return Err(invalid("alpha needs one or two observables"));
    }
    for f in &list {
        config::check_observable(f, sys)?;
    }
    let f = list[0].clone();
    let g = list.get(1).cloned().unwrap_or_else(|| f.clone());
    let p: config::AlphaParams = config::params(&cfg.params)?;
    if p.mode == AlphaMode::Exact && !sys.has_exact_oracle() {
        return Err(invalid(format!("{} has no exact correlation oracle; use mode monteCarlo", sys.name())));
    }
    let grid = cfg.grid(sys.is_discrete())?;
    let seed = cfg.seed;
    Ok(over_grid(
        &grid,
        Box::new(move |i, t| {
            let mode = match p.mode {
                AlphaMode::Exact => InnerProduct::Exact,
                AlphaMode::MonteCarlo => InnerProduct::MonteCarlo { samples: p.samples, seed: derive_seed(seed, i as u64) },
            };
            Ok(vec![Stat::new(t, "alpha", alpha_rate(sys, &f, &g, t, mode, &p.quad)?)])
        }),
    ))
}

fn dist_mean(d: &WeightDist) -> f64 {
    match d {
        WeightDist::PmOne => 0.0,
        WeightDist::Bernoulli { p } => *p,
        WeightDist::Uniform { lo, hi } => 0.5 * (lo + hi),
    }
}

fn sparse(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    let f = cfg.observable(sys)?;
    let p: config::SparseParams = config::params(&cfg.params)?;
    if p.eps.len() != sys.group_dim() {
        return Err(invalid(format!("eps has {} entries, system acts by a {}-dimensional group", p.eps.len(), sys.group_dim())));
    }
    if p.delta.is_some() && sys.is_discrete() {
        return Err(invalid("the smoothing audit needs a flow"));
    }
    let twist = p.a.clone().unwrap_or_else(|| vec![0.0; sys.group_dim()]);
    if twist.len() != sys.group_dim() {
        return Err(invalid("twist dimension does not match the system"));
    }
    let grid = cfg.grid(true)?;
    let x = point(cfg, sys, 0)?;
    let seed = cfg.seed;
    let mean = f.mean();
    Ok(over_grid(
        &grid,
        Box::new(move |i, n| {
            let mut set = power_sequence::<f64>(n as usize, &p.eps)?;
            if sys.is_discrete() {
                // integer times: floor the sparse sequence
                let pts = set.points().iter().map(|b| b.iter().map(|v| v.floor()).collect()).collect();
                set = WeightedSampleSet::unweighted(set.dim(), pts)?;
            }
            let mut target = mean;
            if let Some(dist) = &p.weights {
                let w = random_weights::<f64>(derive_seed(seed, i as u64), *dist, set.len())?;
                set = set.with_weights(w.values)?;
                target = mean * dist_mean(dist);
            }
            let s = weighted_sparse_sum(sys, &f, &x, &set)?;
            let mut rows = vec![Stat::new(n, "sparse", (s - target).norm()).aux("points", set.len() as f64)];
            if let Some(delta) = p.delta {
                let r = smoothed_sum_audit(sys, &f, &x, &set, delta, &twist)?;
                rows.push(
                    Stat::new(n, "smoothing_constant", r.constant)
                        .aux("difference", (r.discrete - r.smoothed).norm())
                        .aux("bound", r.error_bound)
                        .aux("modulus", r.modulus),
                );
            }
            Ok(rows)
        }),
    ))
}

fn weights(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let p: config::WeightsParams = config::params(&cfg.params)?;
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(invalid("delta must lie in (0,1)"));
    }
    if p.replicas == 0 || p.dim == 0 || p.oversample == 0 {
        return Err(invalid("replicas, dim and oversample must be positive"));
    }
    let grid = cfg.grid(true)?;
    let orbit = match &cfg.system {
        Some(_) => {
            let sys = cfg.system()?;
            if !sys.is_discrete() || sys.group_dim() != p.dim {
                return Err(invalid("weighted averages need a ℤ^dim action"));
            }
            Some((sys, cfg.observable(sys)?, point(cfg, sys, 0)?))
        }
        None => None,
    };
    let seed = cfg.seed;
    Ok(over_grid(
        &grid,
        Box::new(move |i, n| {
            let nn = n as usize;
            let count = nn.checked_pow(p.dim as u32).ok_or_else(|| invalid("N^dim overflows"))?;
            let mut y2 = Vec::with_capacity(p.replicas);
            let mut y1 = Vec::with_capacity(p.replicas);
            let mut err = 0.0f64;
            let mut avg = Vec::new();
            for r in 0..p.replicas {
                let s = derive_seed(derive_seed(seed, i as u64), r as u64);
                let w = random_weights::<f64>(s, p.dist, count)?;
                let y = y_statistic(&w.values, nn, p.dim, p.delta, p.oversample)?;
                y1.push(y.value);
                y2.push(y.value * y.value);
                err = err.max(y.error + y.tail);
                if let Some((sys, f, x)) = &orbit {
                    let pts = unit_box(nn, p.dim);
                    let set = WeightedSampleSet::new(p.dim, pts, w.values.clone())?;
                    let v = weighted_sparse_sum(sys, f, x, &set)? - f.mean() * dist_mean(&p.dist);
                    avg.push(v.norm());
                }
            }
            let k = p.replicas as f64;
            let mut rows = vec![Stat::new(n, "Y2_mean", y2.iter().sum::<f64>() / k)
                .aux("Y_mean", y1.iter().sum::<f64>() / k)
                .aux("quad_error", err)
                .aux("replicas", k)];
            if !avg.is_empty() {
                rows.push(Stat::new(n, "weighted_avg", avg.iter().sum::<f64>() / k).aux("replicas", k));
            }
            Ok(rows)
        }),
    ))
}

/// `[1, N]^d ∩ ℤ^d`, last axis fastest.
fn unit_box(n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n.pow(d as u32))
        .map(|mut idx| {
            let mut v = vec![0.0; d];
            for c in v.iter_mut().rev() {
                *c = (idx % n + 1) as f64;
                idx /= n;
            }
            v
        })
        .collect()
}

fn audit_vprop1(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sys = cfg.system()?;
    if !sys.is_discrete() {
        return Err(invalid("the audit runs on ℤ^d actions; restrict the flow first"));
    }
    let f = cfg.observable(sys)?;
    let p: config::VpropParams = config::params(&cfg.params)?;
    let grid = cfg.grid(true)?;
    let hs: Vec<i64> = match &p.h {
        Some(h) if h.len() != grid.len() => return Err(invalid("h needs one entry per grid point")),
        Some(h) => h.clone(),
        None => grid.iter().map(|&t| t.powf(p.h_exponent).round().max(1.0) as i64).collect(),
    };
    for (&t, &h) in grid.iter().zip(&hs) {
        if h < 1 || h as f64 > t {
            return Err(invalid(format!("need 1 ≤ H ≤ T, got H={h} at T={t}")));
        }
    }
    let xs = random_points(cfg, sys, p.points)?;
    let seed = cfg.seed;
    Ok(over_grid(
        &grid,
        Box::new(move |i, t| {
            let mut rows = Vec::new();
            for (j, x) in xs.iter().enumerate() {
                let settings = VpropSettings { n_pairs: p.pairs, seed: derive_seed(derive_seed(seed, i as u64), j as u64), gamma: p.gamma };
                let r = vprop1_audit(sys, &f, x, t as i64, hs[i], &settings)?;
                rows.push(
                    Stat::new(t, "lhs", r.lhs)
                        .aux("term_boundary", r.term_boundary)
                        .aux("term_alpha", r.term_alpha)
                        .aux("term_beta", r.term_beta),
                );
                rows.push(
                    Stat::new(t, "constant", r.constant)
                        .aux("H", hs[i] as f64)
                        .aux("point", j as f64)
                        .aux("beta_rel_err", r.beta_rel_err),
                );
            }
            Ok(rows)
        }),
    ))
}

fn expsum_oracle(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let p: config::ExpsumParams = config::params(&cfg.params)?;
    let grid = cfg.grid(true)?;
    // surface parameter errors before the run
    analytic_weyl_bound(p.bound, grid[0] as u64)?;
    Ok(over_grid(
        &grid,
        Box::new(move |_, n| {
            let measured = weyl_sum(&p.phase, n as u64)?.norm();
            let bound = analytic_weyl_bound(p.bound, n as u64)?;
            Ok(vec![Stat::new(n, "weyl_abs", measured).aux("bound", bound).aux("ratio", measured / bound)])
        }),
    ))
}

fn rates_calc(cfg: &ExperimentConfig) -> CliResult<serde_json::Value> {
    let p: config::RatesCalcParams = config::params(&cfg.params)?;
    let inp = &p.inputs;
    let twist = twist_exponent(inp)?;
    let derived = derived_exponents(inp)?;
    let mut outputs = json!({
        "delta": twist.delta,
        "kappaOpt": twist.kappa_opt,
        "time1": derived.time1,
        "randomWeights": derived.random_weights,
    });
    if !inp.eps.is_empty() {
        let windows = inp
            .eps
            .iter()
            .map(|e| sparse_window(e, &inp.kappa, inp.d))
            .collect::<Result<Vec<_>, _>>()?;
        outputs["sparseWindows"] = serde_json::to_value(&windows).expect("serializable");
        let choice = match &p.a {
            Some(a) => a.resolve()?,
            None => ergolab::rates::AChoice::Optimize,
        };
        if windows.iter().all(|w| w.feasible) {
            // derived here from the three-term bound
            outputs["sparseExponent"] = json!(sparse_exponent(inp, &choice)?);
        }
    }
    Ok(json!({
        "inputs": inp,
        "outputs": outputs,
        "branch": twist.branch.label(),
    }))
}

fn rates_fit(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let p: config::RatesFitParams = config::params(&cfg.params)?;
    if p.inputs.is_empty() {
        return Err(invalid("rates-fit needs input CSVs"));
    }
    let runs = p.inputs.iter().map(|path| report::read_run(path)).collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<_> = runs.into_iter().flat_map(|r| r.rows).collect();
    let groups = report::group(&rows);
    let mut stats = Vec::new();
    for (key, samples) in groups {
        if p.statistic.as_ref().is_some_and(|s| *s != key.statistic) {
            continue;
        }
        let fit = ergolab::rates::fit_power_law(&samples)?;
        stats.push(
            Stat::new(fit.t_max, &key.statistic, fit.slope)
                .aux("intercept", fit.intercept)
                .aux("r_squared", fit.r_squared)
                .aux("points", fit.point_count as f64),
        );
    }
    if stats.is_empty() {
        return Err(invalid("no statistic to fit"));
    }
    Ok(Outcome { stats, failure: None })
}

/// Name recorded in the `system` column.
pub fn system_label(cfg: &ExperimentConfig) -> &'static str {
    cfg.system.as_ref().map(|s| s.name()).unwrap_or("none")
}
