//! Step-size control, stop times and event handling shared by both methods.

use super::events::locate_event;
use super::solution::{eval_dense, Dense, Segment};
use super::{
    error_norm, rodas, tsit5, Dynamics, EventRecord, IntegratorConfig, Method, OdeError,
    OdeProblem, PiGains, Retcode, Solution, Stats,
};
use crate::scalar::Scalar;

/// Consecutive failed attempts (non-finite stage or singular matrix)
/// tolerated before giving up with a domain error.
const MAX_FAILURES: usize = 20;

/// Solves with the explicit Tsitouras 5(4) pair regardless of `cfg.method`.
pub fn solve_explicit<T: Scalar, D: Dynamics<T> + ?Sized>(
    prob: &OdeProblem<'_, D, T>,
    cfg: &IntegratorConfig,
) -> Result<Solution<T>, OdeError> {
    let cfg = IntegratorConfig { method: Method::Tsit5, ..cfg.clone() };
    solve(prob, &cfg)
}

/// Solves with RODAS4 regardless of `cfg.method`. The Jacobian comes from
/// the system: analytic when the model has one, otherwise derived.
pub fn solve_stiff<T: Scalar, D: Dynamics<T> + ?Sized>(
    prob: &OdeProblem<'_, D, T>,
    cfg: &IntegratorConfig,
) -> Result<Solution<T>, OdeError> {
    let cfg = IntegratorConfig { method: Method::Rodas4, ..cfg.clone() };
    solve(prob, &cfg)
}

fn orders(method: Method) -> (usize, usize) {
    // (order of the propagated solution, order of the error estimator)
    match method {
        Method::Tsit5 => (5, 4),
        Method::Rodas4 => (4, 3),
    }
}

fn rms_scaled<V: Scalar, T: Scalar>(v: &[V], u: &[T], cfg: &IntegratorConfig) -> f64 {
    let s: f64 = v
        .iter()
        .zip(u)
        .map(|(x, y)| {
            let r = x.value() / (cfg.abstol + cfg.reltol * y.value().abs());
            r * r
        })
        .sum();
    (s / v.len().max(1) as f64).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn initial_step<T: Scalar, D: Dynamics<T> + ?Sized>(
    sys: &D,
    u: &[T],
    p: &[T],
    t: f64,
    f0: &[T],
    cfg: &IntegratorConfig,
    span: f64,
    stats: &mut Stats,
) -> f64 {
    if let Some(h) = cfg.dt_init {
        return h.min(span).min(cfg.dtmax);
    }
    let order = orders(cfg.method).0 as f64;
    let d0 = rms_scaled(u, u, cfg);
    let d1 = rms_scaled(f0, u, cfg);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let u1: Vec<T> = u.iter().zip(f0).map(|(a, b)| T::from(a.value() + h0 * b.value())).collect();
    let pv: Vec<T> = p.iter().map(|x| T::from(x.value())).collect();
    let mut f1 = vec![T::zero(); u.len()];
    sys.rhs(&u1, &pv, &T::from(t + h0), &mut f1);
    stats.nf += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a.value() - b.value()).collect();
    let d2 = rms_scaled(&diff, u, cfg) / h0;
    let dmax = d1.max(d2);
    let h1 = if !dmax.is_finite() {
        h0 * 1e-3
    } else if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / order)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.dtmax).max(f64::MIN_POSITIVE)
}

fn event_values<T: Scalar, D: Dynamics<T> + ?Sized>(sys: &D, u: &[T], p: &[T], t: &T) -> Vec<f64> {
    (0..sys.n_events()).map(|i| sys.event_condition(i, u, p, t).value()).collect()
}

/// Integrates `prob` with the method selected in `cfg`.
///
/// Configuration and problem errors are returned as `Err`; integration
/// failures end the solve early and are reported in `retcode`.
pub fn solve<T: Scalar, D: Dynamics<T> + ?Sized>(
    prob: &OdeProblem<'_, D, T>,
    cfg: &IntegratorConfig,
) -> Result<Solution<T>, OdeError> {
    cfg.validate()?;
    let sys = prob.system;
    let n = sys.dim();
    if prob.u0.len() != n {
        return Err(OdeError::InvalidProblem(format!(
            "initial state has {} entries, system has {n}",
            prob.u0.len()
        )));
    }
    let (t0, tf) = prob.tspan;
    if !(t0 < tf) {
        return Err(OdeError::InvalidProblem(format!("time span ({t0}, {tf}) must satisfy t0 < tf")));
    }
    let span = tf - t0;
    let (_, q_est) = orders(cfg.method);
    let gains = cfg.controller.unwrap_or_else(|| PiGains::for_order(q_est));

    let mut stops: Vec<f64> = sys.tstops().into_iter().filter(|s| *s > t0 && *s < tf).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(tf);
    let mut si = 0;

    let mut stats = Stats::default();
    let mut t = T::from(t0);
    let mut u = prob.u0.clone();
    let mut p = prob.p.clone();
    let mut f0 = vec![T::zero(); n];
    sys.rhs(&u, &p, &t, &mut f0);
    stats.nf += 1;

    let mut sol = Solution {
        ts: vec![t.clone()],
        us: vec![u.clone()],
        segments: Vec::new(),
        events: Vec::new(),
        params: vec![(t0, p.clone())],
        stats,
        retcode: Retcode::Success,
        method: cfg.method,
    };
    if f0.iter().any(|x| !x.value().is_finite()) {
        sol.retcode = Retcode::DomainError;
        sol.stats.nf = 1;
        return Ok(sol);
    }

    let mut h_val = initial_step(sys, &u, &p, t0, &f0, cfg, span, &mut stats);
    let mut err_prev = 1.0f64;
    let mut last_rejected = false;
    let mut failures = 0usize;
    let mut attempts = 0usize;
    let mut g_prev = event_values(sys, &u, &p, &t);
    let mut retcode = Retcode::Success;

    while t.value() < tf {
        while si < stops.len() - 1 && stops[si] <= t.value() {
            si += 1;
        }
        if attempts >= cfg.max_steps {
            retcode = Retcode::MaxIters;
            break;
        }
        attempts += 1;
        let stop = stops[si];
        let dist = stop - t.value();
        let clamped = h_val * 1.01 >= dist;
        if !clamped && (h_val < cfg.dtmin || t.value() + h_val == t.value()) {
            retcode = Retcode::DtMin;
            break;
        }
        let (h, t_end) = if clamped {
            let te = T::from(stop);
            (te.clone() - &t, te)
        } else {
            let hh = T::from(h_val);
            (hh.clone(), t.clone() + &hh)
        };
        let h_used = h.value();

        // Attempt the step.
        let attempt = match cfg.method {
            Method::Tsit5 => tsit5::step(sys, &u, &p, &t, &h, &t_end, &f0, &mut stats)
                .map(|s| (s.y1, s.err, Dense::Tsit5(s.k))),
            Method::Rodas4 => rodas::step(sys, &u, &p, &t, &h, &t_end, &f0, &mut stats)
                .ok()
                .map(|s| {
                    let dense = Dense::Rosenbrock { y1: s.y1.clone(), c1: s.c1, c2: s.c2 };
                    (s.y1, s.err, dense)
                }),
        };
        let Some((y1, err, dense)) = attempt else {
            stats.nreject += 1;
            failures += 1;
            if failures > MAX_FAILURES {
                retcode = Retcode::DomainError;
                break;
            }
            h_val = h_used * 0.25;
            last_rejected = true;
            continue;
        };
        let m = sys.error_dim().min(n);
        let en = error_norm(&err[..m], &u[..m], &y1[..m], cfg);
        if !en.is_finite() {
            stats.nreject += 1;
            failures += 1;
            if failures > MAX_FAILURES {
                retcode = Retcode::DomainError;
                break;
            }
            h_val = h_used * 0.25;
            last_rejected = true;
            continue;
        }
        failures = 0;

        if en > 1.0 {
            stats.nreject += 1;
            let fac = (gains.safety * en.powf(-1.0 / (q_est as f64 + 1.0))).max(gains.min_factor);
            h_val = h_used * fac.min(1.0);
            last_rejected = true;
            continue;
        }

        // Accepted.
        stats.naccept += 1;
        let e = en.max(1e-10);
        let mut fac = gains.safety * e.powf(-gains.beta1) * err_prev.powf(gains.beta2);
        fac = fac.clamp(gains.min_factor, gains.max_factor);
        if last_rejected {
            fac = fac.min(1.0);
        }
        err_prev = en.max(1e-4);
        last_rejected = false;
        let h_next = (h_used * fac).min(cfg.dtmax);

        let g_new = event_values(sys, &y1, &p, &t_end);
        let mut fired: Option<(usize, f64)> = None;
        for i in 0..g_new.len() {
            if !sys.event_direction(i).crosses(g_prev[i], g_new[i]) {
                continue;
            }
            let (ta, tb) = (t.value(), t_end.value());
            let (ga, gb) = (g_prev[i], g_new[i]);
            let root = locate_event(
                |tau| {
                    if tau == ta {
                        ga
                    } else if tau == tb {
                        gb
                    } else {
                        let tt = T::from(tau);
                        let ui = eval_dense(&u, &t, &h, &dense, &tt);
                        sys.event_condition(i, &ui, &p, &tt).value()
                    }
                },
                (ta, tb),
                None,
            )?;
            if let Some(tau) = root {
                if fired.map_or(true, |(_, best)| tau < best) {
                    fired = Some((i, tau));
                }
            }
        }

        if let Some((idx, tau)) = fired {
            let t_star = event_time(sys, idx, &u, &p, &t, &h, &dense, tau);
            let u_pre = if tau == t_end.value() && !has_partials(&t_star) {
                y1.clone()
            } else {
                eval_dense(&u, &t, &h, &dense, &t_star)
            };
            let mut u_post = u_pre.clone();
            let mut p_new = p.clone();
            sys.apply_event(idx, &mut u_post, &mut p_new, &t_star);
            sol.segments.push(Segment { h, dense });
            sol.ts.push(t_star.clone());
            sol.us.push(u_post.clone());
            sol.events.push(EventRecord { t: t_star.clone(), index: idx, u_pre, u_post: u_post.clone() });
            sol.params.push((tau, p_new.clone()));
            t = t_star;
            u = u_post;
            p = p_new;
            sys.rhs(&u, &p, &t, &mut f0);
            stats.nf += 1;
            if f0.iter().any(|x| !x.value().is_finite()) {
                retcode = Retcode::DomainError;
                break;
            }
            g_prev = event_values(sys, &u, &p, &t);
            let remaining = (tf - t.value()).max(f64::MIN_POSITIVE);
            h_val = initial_step(sys, &u, &p, t.value(), &f0, cfg, remaining, &mut stats);
            err_prev = 1.0;
            continue;
        }

        let f_next = match dense {
            Dense::Tsit5(ref k) => k[6].clone(),
            Dense::Rosenbrock { .. } => {
                let mut f = vec![T::zero(); n];
                sys.rhs(&y1, &p, &t_end, &mut f);
                stats.nf += 1;
                f
            }
        };
        sol.segments.push(Segment { h, dense });
        sol.ts.push(t_end.clone());
        sol.us.push(y1.clone());
        t = t_end;
        u = y1;
        f0 = f_next;
        g_prev = g_new;
        h_val = h_next;
    }

    sol.stats = stats;
    sol.retcode = retcode;
    Ok(sol)
}

/// True when the event time carries derivative information.
fn has_partials<T: Scalar>(t: &T) -> bool {
    t.partials().iter().any(|d| *d != 0.0)
}

/// Event time as a scalar of type `T`. The value is the located root; for
/// dual scalars the partials follow from one Newton correction of the
/// dual-valued event function, i.e. the implicit function theorem applied
/// to `g(u(τ), p, τ) = 0`.
#[allow(clippy::too_many_arguments)]
fn event_time<T: Scalar, D: Dynamics<T> + ?Sized>(
    sys: &D,
    idx: usize,
    u: &[T],
    p: &[T],
    t: &T,
    h: &T,
    dense: &Dense<T>,
    tau: f64,
) -> T {
    let tau_t = T::from(tau);
    let u_tau = eval_dense(u, t, h, dense, &tau_t);
    let g = sys.event_condition(idx, &u_tau, p, &tau_t);
    if g.partials().iter().all(|d| *d == 0.0) {
        return tau_t;
    }
    // Rate of change of g along the dense trajectory, by central difference
    // inside the step.
    let (ta, tb) = (t.value(), t.value() + h.value());
    let delta = (1e-6 * h.value().abs()).max(f64::EPSILON * tau.abs().max(1.0) * 1e3);
    let lo = (tau - delta).max(ta);
    let hi = (tau + delta).min(tb.max(tau));
    let g_at = |s: f64| {
        let st = T::from(s);
        let us = eval_dense(u, t, h, dense, &st);
        sys.event_condition(idx, &us, p, &st).value()
    };
    let gdot = if hi > lo { (g_at(hi) - g_at(lo)) / (hi - lo) } else { 0.0 };
    if gdot == 0.0 || !gdot.is_finite() {
        return tau_t;
    }
    let corr = (g.clone() - g.value()) / gdot;
    tau_t - corr
}
