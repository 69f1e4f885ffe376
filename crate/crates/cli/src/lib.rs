//! Command-line harness around `odesens`: timed sensitivity runs, the
//! Brusselator scaling study, parameter estimation and a verification
//! suite. Every command writes a machine-readable artifact.

pub mod args;
pub mod commands;
pub mod record;
pub mod verify;

use thiserror::Error;

pub use args::{Cli, Command, Format};
pub use record::{read_records, sidecar, write_records, BenchRecord};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad names or flag values; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Solver, estimation or verification failure; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sens(a) => commands::sens(&a),
        Command::Scale(a) => commands::scale(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Verify(a) => verify::run(&a),
    }
}

/// Median of `xs`; the mean of the middle pair for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [36.0, 64.0, 100.0, 144.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 0.01 * x.powf(1.7)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.7).abs() < 1e-12);
    }
}
