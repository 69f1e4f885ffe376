use super::{check_success, check_times, SensError, SensitivityResult};
use crate::forward::{Dual, SeedPlan};
use crate::ode::{solve, IntegratorConfig, OdeProblem, OdeSystem};
use crate::scalar::Scalar;

/// Sensitivities by differentiating the integrator: the problem is solved
/// with dual-valued parameters, one solve per chunk of `chunk` parameters,
/// and partials are read off the dense output at `out_times`.
pub fn dsaad_forward<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    chunk: Option<usize>,
) -> Result<SensitivityResult, SensError> {
    check_times(out_times, prob.tspan)?;
    let n = prob.u0.len();
    let np = prob.p.len();
    let mut res = SensitivityResult::zeros(out_times, n, np);
    if np == 0 {
        let sol = solve(prob, cfg)?;
        check_success(&sol)?;
        for (k, t) in out_times.iter().enumerate() {
            res.states[k] = sol.interpolate(*t)?;
        }
        res.stats = sol.stats;
        res.n_solves = 1;
        return Ok(res);
    }
    let plan = SeedPlan::new(np, chunk.unwrap_or(np))?;
    let u0: Vec<Dual> = prob.u0.iter().map(|v| Dual::constant(*v)).collect();
    for c in plan.chunks() {
        let cols = c.columns();
        let w = cols.len();
        let p: Vec<Dual> = prob
            .p
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if cols.contains(&j) {
                    Dual::variable(*v, j - cols.start, w)
                } else {
                    Dual::constant(*v)
                }
            })
            .collect();
        let dprob = OdeProblem::new(prob.system, u0.clone(), p, prob.tspan)?;
        let sol = solve(&dprob, cfg)?;
        check_success(&sol)?;
        res.stats += sol.stats;
        res.n_solves += 1;
        for (k, t) in out_times.iter().enumerate() {
            let u = sol.interpolate(*t)?;
            if c.chunk_index() == 0 {
                res.states[k] = u.iter().map(|x| x.value()).collect();
            }
            for (i, ui) in u.iter().enumerate() {
                for j in cols.clone() {
                    res.sens[k][i * np + j] = ui.partial(j - cols.start);
                }
            }
        }
    }
    Ok(res)
}
