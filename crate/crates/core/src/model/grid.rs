use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform time grid `t_k = kT/N` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid<S> {
    pub horizon: S,
    pub steps: usize,
}

impl<S: Real> TimeGrid<S> {
    pub fn new(horizon: S, steps: usize) -> Result<Self> {
        let grid = Self { horizon, steps };
        match grid.check() {
            Some(msg) => Err(Error::InvalidInput(msg)),
            None => Ok(grid),
        }
    }

    pub(crate) fn check(&self) -> Option<String> {
        if !(self.horizon > S::zero()) || !self.horizon.is_finite() {
            return Some(format!(
                "grid horizon {} must be positive and finite",
                self.horizon
            ));
        }
        if self.steps == 0 {
            return Some("grid needs at least one step".into());
        }
        None
    }

    #[inline]
    pub fn dt(&self) -> S {
        self.horizon / S::from_usize_lossy(self.steps)
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Node `t_k`; the endpoints are exactly `0` and `T`.
    #[inline]
    pub fn node(&self, k: usize) -> S {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * S::from_usize_lossy(k) / S::from_usize_lossy(self.steps)
        }
    }

    /// Index of the last node not after `t` (clamped to `[0, N]`).
    pub fn node_at_or_before(&self, t: S) -> usize {
        if !(t > S::zero()) {
            return 0;
        }
        let raw = (t / self.dt()).to_f64().unwrap_or(0.0);
        // nodes that sit on t up to round-off count as "at"
        let k = (raw + 1e-9).floor().max(0.0) as usize;
        k.min(self.steps)
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_hit_endpoints() {
        let g = TimeGrid::new(1.0f64, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 1.0);
        assert!((g.dt() - 1.0 / 3.0).abs() < 1e-16);
        assert!((0..3).all(|k| g.node(k) < g.node(k + 1)));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0f64, 10).is_err());
        assert!(TimeGrid::new(1.0f64, 0).is_err());
        assert!(TimeGrid::new(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn node_lookup() {
        let g = TimeGrid::new(1.0f64, 100).unwrap();
        assert_eq!(g.node_at_or_before(0.25), 25);
        assert_eq!(g.node_at_or_before(0.255), 25);
        assert_eq!(g.node_at_or_before(2.0), 100);
        assert_eq!(g.node_at_or_before(-1.0), 0);
    }
}
