//! The four subcommands. Each returns its output text; the binary decides
//! where it goes.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ampc_core::fitting::{draw_samples, sample_values, SampleBox, SampleStatus};
use ampc_core::{
    closed_loop, fit_quadratic, ArtifactMeta, FcsMpcPolicy, GeneralPolicy, OneStepPolicy,
    Policy, PolicyConfig, PrecomputedPolicy, StateVector, VfArtifact,
};

use crate::config::{PathName, Resolved, RunConfig};
use crate::CliError;

/// Policy named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    /// Short horizon with the fitted value function as tail.
    Ampc,
    /// Short horizon with the stage cost as tail.
    Greedy,
    /// Full-horizon FCS-MPC solved every step.
    FcsMpc(usize),
}

impl FromStr for PolicyKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "ampc" => Ok(PolicyKind::Ampc),
            "greedy" => Ok(PolicyKind::Greedy),
            other => {
                let t = other
                    .strip_prefix("fcs-mpc:")
                    .ok_or_else(|| CliError::Config(format!("unknown policy kind `{other}`")))?;
                match t.parse::<usize>() {
                    Ok(t) if t >= 1 => Ok(PolicyKind::FcsMpc(t)),
                    _ => Err(CliError::Config(format!("bad FCS-MPC horizon in `{other}`"))),
                }
            }
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Ampc => f.write_str("ampc"),
            PolicyKind::Greedy => f.write_str("greedy"),
            PolicyKind::FcsMpc(t) => write!(f, "fcs-mpc:{t}"),
        }
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>, CliError> {
    s.split(',').map(str::parse).collect()
}

fn check_vf(res: &Resolved, vf: &VfArtifact) -> Result<(), CliError> {
    let n = res.converter.model.n();
    if vf.vf.dim() != n {
        return Err(CliError::Config(format!(
            "value function has dimension {}, model has {n}",
            vf.vf.dim()
        )));
    }
    Ok(())
}

fn ampc_policy(
    res: &Resolved,
    vf: &VfArtifact,
    path: PathName,
) -> Result<Box<dyn Policy>, CliError> {
    check_vf(res, vf)?;
    let model = &res.converter.model;
    let cfg = PolicyConfig::ampc(
        res.tau,
        vf.vf.clone(),
        res.converter.stage.clone(),
        res.switching.clone(),
    )?;
    let one_step_ok = res.tau == 1 && model.is_pure_switched_affine() && model.has_common_a();
    Ok(match path {
        PathName::General => Box::new(GeneralPolicy::new(model.clone(), cfg)?),
        PathName::Precomputed => Box::new(PrecomputedPolicy::new(model, &cfg)?),
        PathName::OneStep => {
            if res.tau != 1 {
                return Err(CliError::Config("one-step path needs tau = 1".into()));
            }
            Box::new(OneStepPolicy::new(model, &vf.vf, res.switching.clone())?)
        }
        PathName::Auto if one_step_ok => {
            Box::new(OneStepPolicy::new(model, &vf.vf, res.switching.clone())?)
        }
        PathName::Auto => match PrecomputedPolicy::new(model, &cfg) {
            Ok(p) => Box::new(p),
            Err(ampc_core::Error::Unsupported(_)) => {
                Box::new(GeneralPolicy::new(model.clone(), cfg)?)
            }
            Err(e) => return Err(e.into()),
        },
    })
}

pub fn build_policy(
    res: &Resolved,
    vf: Option<&VfArtifact>,
    kind: PolicyKind,
) -> Result<Box<dyn Policy>, CliError> {
    let model = &res.converter.model;
    match kind {
        PolicyKind::Ampc => {
            let vf = vf.ok_or_else(|| CliError::Config("policy `ampc` needs --vf".into()))?;
            ampc_policy(res, vf, res.path)
        }
        PolicyKind::Greedy => {
            let cfg = PolicyConfig::new(
                res.tau,
                ampc_core::TailCost::Stage(res.converter.stage.clone()),
                res.converter.stage.clone(),
                res.switching.clone(),
            )?;
            Ok(Box::new(GeneralPolicy::new(model.clone(), cfg)?))
        }
        PolicyKind::FcsMpc(t) => Ok(Box::new(FcsMpcPolicy::new(
            model.clone(),
            res.converter.stage.clone(),
            res.terminal.clone(),
            res.switching.clone(),
            t,
            res.fcs,
        )?)),
    }
}

/// Report written next to an artifact: `vf.txt` → `vf.txt.report`.
pub fn report_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".report");
    PathBuf::from(s)
}

/// Worker count from `AMPC_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("AMPC_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("AMPC_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub artifact: VfArtifact,
    pub report: String,
}

/// Samples, fits and writes the artifact to `out` plus a report next to it.
/// When too many samples miss their gap target only the report is written.
pub fn synth(
    cfg: &RunConfig,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &Path,
) -> Result<SynthOutcome, CliError> {
    let res = cfg.resolve()?;
    let seed = seed.unwrap_or(res.sample_box.seed());
    let sample_box = SampleBox::new(
        res.sample_box.lower().clone(),
        res.sample_box.upper().clone(),
        res.sample_box.count(),
        seed,
    )?;
    let points = draw_samples(&sample_box);
    let model = &res.converter.model;
    let started = Instant::now();
    let run = || {
        sample_values(
            &points,
            model,
            &res.converter.stage,
            &res.terminal,
            &res.sampling,
        )
    };
    let samples = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let elapsed = started.elapsed().as_secs_f64();

    let total = samples.len();
    let certified = samples.iter().filter(|s| s.is_certified()).count();
    let over_budget = samples
        .iter()
        .filter(|s| s.status == SampleStatus::BudgetExceeded)
        .count();
    let errored = total - certified - over_budget;
    let gaps: Vec<f64> = samples.iter().map(|s| s.gap).filter(|g| g.is_finite()).collect();
    let gap_max = gaps.iter().cloned().fold(0.0, f64::max);
    let gap_mean = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };

    let mut report = String::new();
    let _ = writeln!(report, "samples = {total}");
    let _ = writeln!(report, "seed = {seed}");
    let _ = writeln!(report, "remaining_horizon = {}", res.sampling.remaining_horizon);
    let _ = writeln!(report, "rel_gap_target = {}", res.sampling.rel_gap);
    let _ = writeln!(report, "node_budget = {}", res.sampling.node_budget);
    let _ = writeln!(report, "certified = {certified}");
    let _ = writeln!(report, "budget_exceeded = {over_budget}");
    let _ = writeln!(report, "solver_errors = {errored}");
    let _ = writeln!(report, "gap_mean = {gap_mean:.6e}");
    let _ = writeln!(report, "gap_max = {gap_max:.6e}");
    let _ = writeln!(report, "sampling_seconds = {elapsed:.3}");

    let failed_fraction = (total - certified) as f64 / total as f64;
    if failed_fraction > res.max_failed_fraction || certified == 0 {
        let _ = writeln!(
            report,
            "diagnosis = {} of {total} samples not certified (allowed fraction {}); \
             raise sampling.node_budget, lower sampling.remaining_horizon, or loosen \
             sampling.rel_gap",
            total - certified,
            res.max_failed_fraction
        );
        if let Some(s) = samples.iter().find(|s| !s.is_certified()) {
            let _ = writeln!(report, "first_uncertified_state = {:?}", s.x.as_slice());
        }
        write_file(&report_path(out), &report)?;
        return Err(CliError::Budget(format!(
            "{} of {total} samples not certified; artifact not written",
            total - certified
        )));
    }

    let fit = fit_quadratic(&samples, &res.converter.energy, &res.fit, &res.converter.desired)?;
    let _ = writeln!(report, "lambda = {}", res.fit.lambda);
    let _ = writeln!(report, "psd = {}", res.fit.psd);
    let _ = writeln!(report, "alpha_nonneg = {}", res.fit.alpha_nonneg);
    let _ = writeln!(report, "fit_used = {}", fit.used);
    let _ = writeln!(report, "fit_excluded = {}", fit.excluded);
    let _ = writeln!(report, "fit_mse = {:.6e}", fit.mse);
    let _ = writeln!(report, "rank_deficient = {}", fit.rank_deficient);
    let _ = writeln!(report, "alpha = {:.6e}", fit.vf.alpha());
    let eig: Vec<String> = fit.vf.eigenvalues().iter().map(|e| format!("{e:.6e}")).collect();
    let _ = writeln!(report, "eigenvalues_p = {}", eig.join(" "));

    let artifact = VfArtifact {
        vf: fit.vf,
        meta: ArtifactMeta {
            lambda: res.fit.lambda,
            seed,
            sample_count: total,
            fit_mse: fit.mse,
        },
    };
    artifact.save(out)?;
    write_file(&report_path(out), &report)?;
    Ok(SynthOutcome { artifact, report })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_vf(path: &Path) -> Result<VfArtifact, CliError> {
    Ok(VfArtifact::load(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimulateOptions {
    /// Leave `decision_latency_us` empty so that reruns are byte-identical.
    pub record_latency: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            record_latency: true,
        }
    }
}

pub fn csv_header(state_names: &[String]) -> String {
    let mut h = String::from("t_index,time_s");
    for s in state_names {
        h.push(',');
        h.push_str(s);
    }
    h.push_str(",input,stage_cost,switching_cost,decision_latency_us");
    h
}

/// Closed-loop trajectory as CSV: `steps + 1` state rows, the last without
/// an input.
pub fn simulate(
    cfg: &RunConfig,
    vf: Option<&VfArtifact>,
    kind: PolicyKind,
    opts: SimulateOptions,
) -> Result<String, CliError> {
    let res = cfg.resolve()?;
    let mut policy = build_policy(&res, vf, kind)?;
    let run = closed_loop(
        &res.converter.model,
        policy.as_mut(),
        &res.x0,
        res.steps,
        res.u_init,
        &res.converter.stage,
        res.switching.as_ref(),
    )?;
    let dt = res.converter.timestep_s;
    let mut out = csv_header(&res.converter.state_names);
    out.push('\n');
    for (t, x) in run.states.iter().enumerate() {
        let _ = write!(out, "{t},{}", t as f64 * dt);
        for v in x.iter() {
            let _ = write!(out, ",{v}");
        }
        if t < run.inputs.len() {
            let _ = write!(
                out,
                ",{},{},{},",
                run.inputs[t].get(),
                run.stage_costs[t],
                run.switching_costs[t]
            );
            if opts.record_latency {
                let _ = write!(out, "{:.3}", run.latencies[t].as_secs_f64() * 1e6);
            }
        } else {
            let _ = write!(out, ",,{},,", res.converter.stage.eval(x));
        }
        out.push('\n');
    }
    Ok(out)
}

/// One row per policy: averages of stage and switching cost over the run.
pub fn eval(
    cfg: &RunConfig,
    vf: Option<&VfArtifact>,
    kinds: &[PolicyKind],
) -> Result<String, CliError> {
    if kinds.is_empty() {
        return Err(CliError::Config("no policies to evaluate".into()));
    }
    let res = cfg.resolve()?;
    let mut out = String::from("policy,average_stage_cost,average_switching_cost\n");
    for &kind in kinds {
        let mut policy = build_policy(&res, vf, kind)?;
        let run = closed_loop(
            &res.converter.model,
            policy.as_mut(),
            &res.x0,
            res.steps,
            res.u_init,
            &res.converter.stage,
            res.switching.as_ref(),
        )?;
        let _ = writeln!(
            out,
            "{kind},{},{}",
            run.average_stage_cost(),
            run.average_switching_cost()
        );
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub decisions: usize,
    pub repeats: usize,
    pub seed: Option<u64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            decisions: 10_000,
            repeats: 5,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathTiming {
    pub path: &'static str,
    pub median_us: f64,
    pub p99_us: f64,
    /// Variance of per-repeat medians.
    pub median_variance_us2: f64,
    /// Decisions differing from the general path on the same states.
    pub mismatches: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

/// Times every A-MPC decision path the model supports on the same random
/// states.
pub fn bench_paths(
    cfg: &RunConfig,
    vf: &VfArtifact,
    opts: BenchOptions,
) -> Result<Vec<PathTiming>, CliError> {
    if opts.decisions == 0 || opts.repeats == 0 {
        return Err(CliError::Config("bench needs decisions and repeats ≥ 1".into()));
    }
    let res = cfg.resolve()?;
    check_vf(&res, vf)?;
    let model = &res.converter.model;
    let states: Vec<StateVector> = draw_samples(&SampleBox::new(
        res.sample_box.lower().clone(),
        res.sample_box.upper().clone(),
        opts.decisions,
        opts.seed.unwrap_or(res.sample_box.seed()),
    )?);
    let k = model.input_count();
    let prevs: Vec<_> = (0..states.len())
        .map(|i| ampc_core::InputIndex::from_zero_based(i % k))
        .collect();

    let mut paths = vec![("general", PathName::General)];
    let cfg_p = PolicyConfig::ampc(
        res.tau,
        vf.vf.clone(),
        res.converter.stage.clone(),
        res.switching.clone(),
    )?;
    if PrecomputedPolicy::new(model, &cfg_p).is_ok() {
        paths.push(("precomputed", PathName::Precomputed));
    }
    if res.tau == 1 && model.is_pure_switched_affine() && model.has_common_a() {
        paths.push(("onestep", PathName::OneStep));
    }

    let mut reference: Vec<ampc_core::InputIndex> = Vec::new();
    let mut out = Vec::new();
    for (label, path) in paths {
        let mut policy = ampc_policy(&res, vf, path)?;
        let mut all = Vec::with_capacity(opts.decisions * opts.repeats);
        let mut medians = Vec::with_capacity(opts.repeats);
        let mut decisions = Vec::with_capacity(states.len());
        for rep in 0..opts.repeats {
            let mut times = Vec::with_capacity(states.len());
            for (z, &u_prev) in states.iter().zip(&prevs) {
                let t0 = Instant::now();
                let u = policy.decide(z, u_prev)?;
                times.push(t0.elapsed().as_secs_f64() * 1e6);
                if rep == 0 {
                    decisions.push(u);
                }
            }
            times.sort_by(f64::total_cmp);
            medians.push(quantile(&times, 0.5));
            all.extend(times);
        }
        all.sort_by(f64::total_cmp);
        let mean_med = medians.iter().sum::<f64>() / medians.len() as f64;
        let var = medians.iter().map(|m| (m - mean_med).powi(2)).sum::<f64>()
            / medians.len() as f64;
        if reference.is_empty() {
            reference = decisions.clone();
        }
        let mismatches = reference.iter().zip(&decisions).filter(|(a, b)| a != b).count();
        out.push(PathTiming {
            path: label,
            median_us: quantile(&all, 0.5),
            p99_us: quantile(&all, 0.99),
            median_variance_us2: var,
            mismatches,
        });
    }
    Ok(out)
}

pub fn bench(cfg: &RunConfig, vf: &VfArtifact, opts: BenchOptions) -> Result<String, CliError> {
    let rows = bench_paths(cfg, vf, opts)?;
    let mut out = String::from(
        "path,decisions,repeats,median_us,p99_us,median_variance_us2,mismatches_vs_general\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.6e},{}",
            r.path, opts.decisions, opts.repeats, r.median_us, r.p99_us, r.median_variance_us2,
            r.mismatches
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_kinds_parse() {
        assert_eq!("ampc".parse::<PolicyKind>().unwrap(), PolicyKind::Ampc);
        assert_eq!("fcs-mpc:5".parse::<PolicyKind>().unwrap(), PolicyKind::FcsMpc(5));
        assert!("fcs-mpc:0".parse::<PolicyKind>().is_err());
        assert!("mpc".parse::<PolicyKind>().is_err());
        let list = parse_policy_list("greedy,fcs-mpc:2").unwrap();
        assert_eq!(list, vec![PolicyKind::Greedy, PolicyKind::FcsMpc(2)]);
        for k in list {
            assert_eq!(k.to_string().parse::<PolicyKind>().unwrap(), k);
        }
    }

    #[test]
    fn header_layout() {
        let h = csv_header(&["i_L".into(), "v_C".into()]);
        assert_eq!(
            h,
            "t_index,time_s,i_L,v_C,input,stage_cost,switching_cost,decision_latency_us"
        );
    }

    #[test]
    fn report_path_appends_suffix() {
        assert_eq!(report_path(Path::new("out/vf.txt")), PathBuf::from("out/vf.txt.report"));
    }
}
