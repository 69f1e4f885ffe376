use std::fs;
use std::path::Path;
use std::time::Instant;

use odesens::estimation::{estimate_from, generate_data, BfgsOptions, EstimationError};
use odesens::models::{self, ModelSpec};
use odesens::ode::{IntegratorConfig, OdeProblem, Stats};
use odesens::sensitivity::{
    dsaad_forward, loss_gradient, sensitivities, SensError, SensitivityMethod, SensitivityResult,
};
use serde_json::json;

use crate::args::{EstimateArgs, ScaleArgs, SensArgs};
use crate::record::{sidecar, write_records, BenchRecord};
use crate::{loglog_slope, median, CliError};

pub fn resolve_model(name: &str, bruss_n: usize) -> Result<ModelSpec, CliError> {
    let m = if name == "bruss" { models::bruss(bruss_n) } else { models::by_name(name) };
    m.map_err(|e| CliError::Usage(e.to_string()))
}

pub fn resolve_method(name: &str) -> Result<SensitivityMethod, CliError> {
    SensitivityMethod::from_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown method `{name}` (expected one of {})",
            SensitivityMethod::NAMES.join(", ")
        ))
    })
}

fn check_run_flags(tol: f64, reps: usize) -> Result<(), CliError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be a positive number, got {tol}")));
    }
    if reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    Ok(())
}

/// Runs `f` once as warmup and then `reps` timed times. Returns the last
/// result with the median wall time. A failing warmup is returned at once
/// with its own time.
pub fn timed<T, E>(reps: usize, mut f: impl FnMut() -> Result<T, E>) -> (Result<T, E>, f64) {
    let start = Instant::now();
    let mut last = f();
    if last.is_err() {
        return (last, start.elapsed().as_secs_f64());
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        last = f();
        times.push(start.elapsed().as_secs_f64());
        if last.is_err() {
            break;
        }
    }
    (last, median(&times))
}

fn retcode_of(e: &SensError) -> String {
    match e {
        SensError::Solver { retcode, .. } => retcode.as_str().to_string(),
        _ => "error".to_string(),
    }
}

fn sens_failure(e: SensError) -> CliError {
    match e {
        SensError::MissingJacobian(_) => CliError::Usage(e.to_string()),
        e => CliError::Runtime(e.to_string()),
    }
}

fn record(model: &ModelSpec, method: &str, wall: f64, stats: Stats, max_err: Option<f64>, retcode: String) -> BenchRecord {
    BenchRecord {
        model: model.name.to_string(),
        method: method.to_string(),
        n_params: model.n_params(),
        wall_time_s: wall,
        nf: stats.nf,
        nj: stats.nj,
        max_err,
        retcode,
    }
}

fn write_trajectories(path: &Path, r: &SensitivityResult) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..r.n_states).map(|i| format!("u{i}")));
    for j in 0..r.n_params {
        header.extend((0..r.n_states).map(|i| format!("s{i}_{j}")));
    }
    w.write_record(&header).map_err(err)?;
    for (k, t) in r.times.iter().enumerate() {
        let row = std::iter::once(*t).chain(r.states[k].iter().copied()).chain(r.by_param(k));
        w.write_record(row.map(|x| format!("{x:?}"))).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn sens(a: &SensArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model, a.bruss_n)?;
    let method = resolve_method(&a.method)?;
    check_run_flags(a.tol, a.reps)?;
    if method.is_adjoint() {
        return Err(CliError::Usage(format!(
            "`{}` yields cost gradients only; use `estimate` or `scale`",
            a.method
        )));
    }
    let out = a.output.path("sens");
    let cfg = IntegratorConfig::new(model.method, a.tol);
    let ts = odesens::estimation::even_times(model.tspan.0, model.tspan.1, model.n_data_points);
    let prob = OdeProblem::new(&model.system, model.u0.clone(), model.true_params.clone(), model.tspan)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let (res, wall) = timed(a.reps, || sensitivities(&prob, &cfg, &ts, &method));
    let r = match res {
        Ok(r) => r,
        Err(e) => {
            if matches!(e, SensError::Solver { .. }) {
                let rec = record(&model, &a.method, wall, Stats::default(), None, retcode_of(&e));
                write_records(&out, a.output.format, &[rec])?;
            }
            return Err(sens_failure(e));
        }
    };
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let max_err = if matches!(method, SensitivityMethod::Dsaad { .. }) {
        Some(0.0)
    } else {
        dsaad_forward(&prob, &cfg, &ts, None).ok().map(|d| d.max_abs_diff(&r))
    };
    write_trajectories(&sidecar(&out, "sens.csv"), &r)?;
    let retcode = if r.invalid_columns.is_empty() { "success" } else { "partial" };
    write_records(&out, a.output.format, &[record(&model, &a.method, wall, r.stats, max_err, retcode.into())])?;
    if !r.invalid_columns.is_empty() {
        return Err(CliError::Runtime(format!("perturbed solves failed for parameters {:?}", r.invalid_columns)));
    }
    Ok(())
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn scale(a: &ScaleArgs) -> Result<(), CliError> {
    if a.model != "bruss" {
        return Err(CliError::Usage(format!("scale supports only --model bruss, got `{}`", a.model)));
    }
    check_run_flags(a.tol, a.reps)?;
    if a.n_list.is_empty() || a.n_list.iter().any(|&n| n < 2) {
        return Err(CliError::Usage(format!("--n-list values must be at least 2, got {:?}", a.n_list)));
    }
    let methods = a.methods.iter().map(|m| resolve_method(m)).collect::<Result<Vec<_>, _>>()?;
    let mut ns = a.n_list.clone();
    ns.sort_unstable();
    ns.dedup();

    let mut records = Vec::new();
    for n in ns {
        let model = resolve_model("bruss", n)?;
        let cfg = IntegratorConfig::new(model.method, a.tol);
        let data = generate_data(&model, model.n_data_points);
        let cost = data.as_ref().map_err(|e| e.to_string()).and_then(|d| d.cost().map_err(|e| e.to_string()));
        let cost = match cost {
            Ok(c) => c,
            Err(e) => {
                eprintln!("warning: N = {n}: no data ({e})");
                for name in &a.methods {
                    records.push(record(&model, name, f64::NAN, Stats::default(), None, "data_error".into()));
                }
                continue;
            }
        };
        let prob = OdeProblem::new(&model.system, model.u0.clone(), model.initial_guess(), model.tspan)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut grads = Vec::new();
        for (name, method) in a.methods.iter().zip(&methods) {
            let (res, wall) = timed(a.reps, || loss_gradient(&prob, &cfg, &cost, method));
            match res {
                Ok(g) => {
                    records.push(record(&model, name, wall, g.stats, None, "success".into()));
                    grads.push(Some(g.grad));
                }
                Err(e) => {
                    eprintln!("warning: N = {n}, {name}: {e}");
                    records.push(record(&model, name, wall, Stats::default(), None, retcode_of(&e)));
                    grads.push(None);
                }
            }
        }
        let reference = methods
            .iter()
            .position(|m| matches!(m, SensitivityMethod::Dsaad { .. }))
            .and_then(|i| grads[i].clone());
        if let Some(reference) = reference {
            let start = records.len() - grads.len();
            for (rec, g) in records[start..].iter_mut().zip(&grads) {
                rec.max_err = g.as_ref().map(|g| rel_inf(g, &reference));
            }
        }
    }
    records.sort_by_key(|r| r.n_params);
    for name in &a.methods {
        let ok: Vec<&BenchRecord> =
            records.iter().filter(|r| &r.method == name && r.retcode == "success").collect();
        if ok.len() >= 2 {
            let xs: Vec<f64> = ok.iter().map(|r| r.n_params as f64).collect();
            let ys: Vec<f64> = ok.iter().map(|r| r.wall_time_s).collect();
            eprintln!("{name}: log-log slope {:.3}", loglog_slope(&xs, &ys));
        }
    }
    write_records(&a.output.path("scale"), a.output.format, &records)
}

pub fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let model = resolve_model(&a.model, a.bruss_n)?;
    let method = resolve_method(&a.method)?;
    check_run_flags(a.tol, a.reps)?;
    let out = a.output.path("estimate");
    let data = generate_data(&model, model.n_data_points).map_err(|e| CliError::Runtime(e.to_string()))?;
    let cfg = IntegratorConfig::new(model.method, a.tol);

    let opts = BfgsOptions { max_iters: a.max_iters, ..BfgsOptions::default() };
    let p0 = model.initial_guess();
    let (res, wall) = timed(a.reps, || estimate_from(&model, &method, &data, &cfg, &p0, &opts));
    let est = match res {
        Ok(r) => r,
        Err(EstimationError::Sens(e)) => {
            let rec = record(&model, &a.method, wall, Stats::default(), None, retcode_of(&e));
            write_records(&out, a.output.format, &[rec])?;
            return Err(sens_failure(e));
        }
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };
    let opt = &est.opt;
    let max_err = opt.p_final.iter().zip(&model.true_params).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let retcode = if opt.converged { "success" } else { "not_converged" };
    let rec = record(&model, &a.method, wall, est.stats, Some(max_err), retcode.into());
    write_records(&out, a.output.format, &[rec])?;

    let report = json!({
        "model": model.name,
        "method": a.method,
        "tol": a.tol,
        "converged": opt.converged,
        "message": opt.message,
        "iterations": opt.iterations,
        "n_evals": opt.n_evals,
        "n_solves": est.n_solves,
        "cost_final": opt.cost_final,
        "grad_norm": opt.grad_norm,
        "p_initial": p0,
        "p_final": opt.p_final,
        "p_true": model.true_params,
        "cost_history": opt.cost_history,
    });
    let path = sidecar(&out, "opt.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    if !opt.converged {
        return Err(CliError::Runtime(format!("estimation did not converge: {}", opt.message)));
    }
    Ok(())
}
