use crate::error::{Error, Result};

/// Uniform time grid `t_n = t0 + n h`, `n = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("grid needs at least 2 steps, got {steps}")));
        }
        if !(t0.is_finite() && t_final.is_finite()) || t_final <= t0 {
            return Err(Error::Config(format!(
                "grid interval [{t0}, {t_final}] must be finite and non-empty"
            )));
        }
        Ok(Self { t0, t_final, steps })
    }

    pub fn step(&self) -> f64 {
        (self.t_final - self.t0) / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.step()
    }

    /// Time at half-step index `s`, i.e. `t0 + s h / 2`.
    pub fn half_time(&self, s: usize) -> f64 {
        self.t0 + 0.5 * s as f64 * self.step()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    pub fn refined(&self) -> Self {
        Self { steps: 2 * self.steps, ..*self }
    }

    /// Composite trapezoid weight of node `j` on `[t_a, t_b]`.
    #[inline]
    pub fn trapezoid_weight(&self, j: usize, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else if j == a || j == b {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        let g = TimeGrid::new(0.0, 2.0, 4).unwrap();
        assert_eq!(g.step(), 0.5);
        assert_eq!(g.time(4), 2.0);
        assert_eq!(g.half_time(3), 0.75);
    }

    #[test]
    fn trapezoid_weights_integrate_linear_exactly() {
        let g = TimeGrid::new(0.0, 3.0, 30).unwrap();
        let integral: f64 = (0..=20).map(|j| g.trapezoid_weight(j, 0, 20) * g.time(j)).sum();
        assert!((integral - 2.0).abs() < 1e-12);
    }
}
