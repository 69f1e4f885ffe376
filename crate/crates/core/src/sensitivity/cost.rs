use super::SensError;

/// Per-point cost `c(u(tᵢ))`.
#[derive(Debug, Clone, PartialEq)]
pub enum PointCost {
    /// `‖u − obsᵢ‖²` with one observation row per data time.
    L2 { observations: Vec<Vec<f64>> },
    /// `w · u` with the same weights at every data time.
    Linear { weights: Vec<f64> },
}

/// Cost `C = Σᵢ c(u(tᵢ))` over strictly increasing data times.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub times: Vec<f64>,
    pub point: PointCost,
}

impl CostSpec {
    pub fn l2(times: Vec<f64>, observations: Vec<Vec<f64>>) -> Result<Self, SensError> {
        if times.len() != observations.len() {
            return Err(SensError::Config(format!(
                "{} data times but {} observation rows",
                times.len(),
                observations.len()
            )));
        }
        let c = CostSpec { times, point: PointCost::L2 { observations } };
        c.check_times()?;
        Ok(c)
    }

    pub fn linear(times: Vec<f64>, weights: Vec<f64>) -> Result<Self, SensError> {
        let c = CostSpec { times, point: PointCost::Linear { weights } };
        c.check_times()?;
        Ok(c)
    }

    fn check_times(&self) -> Result<(), SensError> {
        if self.times.is_empty() {
            return Err(SensError::Config("cost has no data times".into()));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SensError::Config("data times must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Checks the data against a time span and state dimension.
    pub fn validate(&self, tspan: (f64, f64), n: usize) -> Result<(), SensError> {
        self.check_times()?;
        super::check_times(&self.times, tspan)?;
        let ok = match &self.point {
            PointCost::L2 { observations } => observations.iter().all(|o| o.len() == n),
            PointCost::Linear { weights } => weights.len() == n,
        };
        if !ok {
            return Err(SensError::Config(format!("cost data do not match {n} states")));
        }
        Ok(())
    }

    pub fn point_value(&self, i: usize, u: &[f64]) -> f64 {
        match &self.point {
            PointCost::L2 { observations } => {
                u.iter().zip(&observations[i]).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            PointCost::Linear { weights } => u.iter().zip(weights).map(|(a, w)| a * w).sum(),
        }
    }

    /// `∂c/∂u` at data point `i`.
    pub fn point_grad(&self, i: usize, u: &[f64]) -> Vec<f64> {
        match &self.point {
            PointCost::L2 { observations } => {
                u.iter().zip(&observations[i]).map(|(a, b)| 2.0 * (a - b)).collect()
            }
            PointCost::Linear { weights } => weights.clone(),
        }
    }

    /// `C` for states at the data times.
    pub fn total(&self, states: &[Vec<f64>]) -> f64 {
        states.iter().enumerate().map(|(i, u)| self.point_value(i, u)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_value_and_gradient() {
        let c = CostSpec::l2(vec![0.0, 1.0], vec![vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(c.point_value(0, &[2.0, 2.0]), 1.0);
        assert_eq!(c.point_grad(0, &[2.0, 2.0]), vec![2.0, 0.0]);
        assert_eq!(c.total(&[vec![1.0, 2.0], vec![3.0, 4.0]]), 25.0);
    }

    #[test]
    fn rejects_bad_times() {
        assert!(CostSpec::linear(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(CostSpec::linear(vec![], vec![1.0]).is_err());
        let c = CostSpec::linear(vec![0.5, 2.0], vec![1.0]).unwrap();
        assert!(c.validate((0.0, 1.0), 1).is_err());
        assert!(c.validate((0.0, 2.0), 2).is_err());
        assert!(c.validate((0.0, 2.0), 1).is_ok());
    }
}
