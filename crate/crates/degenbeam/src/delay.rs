//! Standalone delay line: the boundary-velocity history carried as a
//! transport equation on the unit interval, discretized by implicit
//! first-order upwinding (unconditionally stable and strictly
//! dissipative). An exact ring-buffer mode running in lock step with the
//! delay is provided as a cross-check oracle.

use crate::model::Expr;

/// Discretized history `w_j ~ w(s_j, t)` at `s_j = j / m`, `j = 0..=m`.
/// `w(0)` is the current boundary velocity, `w(1)` the velocity one full
/// delay in the past.
#[derive(Debug, Clone)]
pub struct DelayLine {
    pub samples: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
}

impl DelayLine {
    /// Initializes the line from the prescribed history, sampled by lag:
    /// `w_j = g0(s_j tau)`. The caller overwrites `w_0` with the actual
    /// initial boundary velocity when coupling to a beam.
    pub fn init_from_history(g0: &Expr, m: usize, tau: f64, gamma: f64) -> Self {
        let samples = (0..=m)
            .map(|j| g0.eval(j as f64 / m as f64 * tau))
            .collect();
        Self { samples, tau, gamma }
    }

    pub fn n_cells(&self) -> usize {
        self.samples.len() - 1
    }

    /// One implicit upwind step with the inflow value at the new time.
    /// With `a = tau * ds / dt` the interior update is
    /// `w_j <- (a w_j + w_{j-1}) / (1 + a)`, swept from the inflow end.
    pub fn advance(&mut self, inflow: f64, dt: f64) {
        let m = self.n_cells();
        let ds = 1.0 / m as f64;
        let a = self.tau * ds / dt;
        self.samples[0] = inflow;
        for j in 1..=m {
            self.samples[j] = (a * self.samples[j] + self.samples[j - 1]) / (1.0 + a);
        }
    }

    /// Exact lock-step shift: valid when `dt = tau / m` exactly; every
    /// sample moves one slot toward the outflow end. Cross-check oracle.
    pub fn advance_ring(&mut self, inflow: f64) {
        let m = self.n_cells();
        for j in (1..=m).rev() {
            self.samples[j] = self.samples[j - 1];
        }
        self.samples[0] = inflow;
    }

    /// Outflow sample `w(1, t)`, i.e. the velocity delayed by `tau`.
    pub fn read_outflow(&self) -> f64 {
        *self.samples.last().unwrap()
    }

    /// Delay energy `(gamma tau / 2) * integral of w^2` by the trapezoid
    /// rule; exact for piecewise-linear sample profiles.
    pub fn delay_energy(&self) -> f64 {
        let m = self.n_cells();
        let ds = 1.0 / m as f64;
        let mut acc = 0.5 * (self.samples[0] * self.samples[0]
            + self.samples[m] * self.samples[m]);
        for j in 1..m {
            acc += self.samples[j] * self.samples[j];
        }
        0.5 * self.gamma * self.tau * ds * acc
    }
}
