use super::{check_times, FdScheme, SensError, SensitivityResult};
use crate::ode::{solve, IntegratorConfig, OdeProblem, OdeSystem, Retcode, Stats};

/// Perturbation of a parameter of size `p` for the given scheme:
/// `√ε·max(|p|, 1)` forward and `∛ε·max(|p|, 1)` central.
pub fn numdiff_step(p: f64, scheme: FdScheme) -> f64 {
    let base = match scheme {
        FdScheme::Forward => f64::EPSILON.sqrt(),
        FdScheme::Central => f64::EPSILON.cbrt(),
    };
    base * p.abs().max(1.0)
}

/// States at `out_times`, or the retcode of a failed solve.
fn states_at<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    p: Vec<f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    stats: &mut Stats,
) -> Result<Result<Vec<Vec<f64>>, (Retcode, f64)>, SensError> {
    let pprob = OdeProblem { system: prob.system, u0: prob.u0.clone(), p, tspan: prob.tspan };
    let sol = solve(&pprob, cfg)?;
    *stats += sol.stats;
    if !sol.retcode.is_success() {
        return Ok(Err((sol.retcode, sol.tf())));
    }
    let mut out = Vec::with_capacity(out_times.len());
    for t in out_times {
        out.push(sol.interpolate(*t)?);
    }
    Ok(Ok(out))
}

/// Sensitivities by finite differences of whole solves. The forward scheme
/// costs `1 + P` solves, the central scheme `2P`; the central scheme
/// reports as states the mean of each pair of perturbed solutions. A
/// perturbed solve that fails leaves its column NaN and listed in
/// `invalid_columns`.
pub fn numdiff<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    scheme: FdScheme,
) -> Result<SensitivityResult, SensError> {
    check_times(out_times, prob.tspan)?;
    let (n, np) = (prob.u0.len(), prob.p.len());
    let mut res = SensitivityResult::zeros(out_times, n, np);
    let mut stats = Stats::default();
    let nk = out_times.len();

    let base = if scheme == FdScheme::Forward || np == 0 {
        res.n_solves += 1;
        let b = states_at(prob, prob.p.clone(), cfg, out_times, &mut stats)?;
        let b = b.map_err(|(retcode, t)| SensError::Solver { retcode, t })?;
        res.states = b.clone();
        Some(b)
    } else {
        None
    };

    let mut state_sum = vec![vec![0.0; n]; nk];
    let mut pairs = 0usize;
    for j in 0..np {
        let h = numdiff_step(prob.p[j], scheme);
        let shifted = |sign: f64| {
            let mut p = prob.p.clone();
            p[j] += sign * h;
            p
        };
        let column = match scheme {
            FdScheme::Forward => {
                res.n_solves += 1;
                let up = states_at(prob, shifted(1.0), cfg, out_times, &mut stats)?;
                let b = base.as_ref().expect("forward scheme has a base solve");
                up.ok().map(|up| (up, b.clone(), h))
            }
            FdScheme::Central => {
                res.n_solves += 2;
                let up = states_at(prob, shifted(1.0), cfg, out_times, &mut stats)?;
                let dn = states_at(prob, shifted(-1.0), cfg, out_times, &mut stats)?;
                match (up, dn) {
                    (Ok(up), Ok(dn)) => {
                        for k in 0..nk {
                            for i in 0..n {
                                state_sum[k][i] += 0.5 * (up[k][i] + dn[k][i]);
                            }
                        }
                        pairs += 1;
                        Some((up, dn, 2.0 * h))
                    }
                    _ => None,
                }
            }
        };
        match column {
            Some((hi, lo, width)) => {
                for k in 0..nk {
                    for i in 0..n {
                        res.sens[k][i * np + j] = (hi[k][i] - lo[k][i]) / width;
                    }
                }
            }
            None => {
                res.invalid_columns.push(j);
                for row in res.sens.iter_mut() {
                    for i in 0..n {
                        row[i * np + j] = f64::NAN;
                    }
                }
            }
        }
    }
    if base.is_none() {
        if pairs == 0 {
            return Err(SensError::Config("every perturbed solve failed".into()));
        }
        for k in 0..nk {
            for i in 0..n {
                res.states[k][i] = state_sum[k][i] / pairs as f64;
            }
        }
    }
    res.stats = stats;
    Ok(res)
}
