//! Admissible control processes.

use std::fmt;
use std::sync::Arc;

use crate::model::grid::TimeGrid;
use crate::model::sets::ControlBox;
use crate::scalar::Real;

pub type OpenLoopFn<S> = Arc<dyn Fn(S) -> Vec<S> + Send + Sync>;
pub type FeedbackFn<S> = Arc<dyn Fn(S, &[S]) -> Vec<S> + Send + Sync>;
/// Event predicate over the Brownian increments observed so far.
pub type EventFn<S> = Arc<dyn Fn(&[S]) -> bool + Send + Sync>;

/// A control `u(t, ω)` built from the supported kinds.
#[derive(Clone)]
pub enum ControlProcess<S> {
    /// `t ↦ u(t)`.
    Deterministic(OpenLoopFn<S>),
    /// `(t, x) ↦ u(t, x)`, closed on the state of the scenario being simulated.
    Feedback(FeedbackFn<S>),
    /// Equals `value` on `[start, start + width)` whenever `event` holds,
    /// and `base` otherwise. The event sees the increments `ΔW_0 … ΔW_{i-1}`
    /// where `t_i` is the last node not after `start`.
    Spike {
        base: Box<ControlProcess<S>>,
        value: Vec<S>,
        start: S,
        width: S,
        event: Option<EventFn<S>>,
    },
}

impl<S: Real> fmt::Debug for ControlProcess<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic(_) => f.write_str("Deterministic"),
            Self::Feedback(_) => f.write_str("Feedback"),
            Self::Spike {
                base,
                value,
                start,
                width,
                event,
            } => f
                .debug_struct("Spike")
                .field("base", base)
                .field("value", value)
                .field("start", start)
                .field("width", width)
                .field("event", &event.is_some())
                .finish(),
        }
    }
}

impl<S: Real> ControlProcess<S> {
    pub fn constant(u: Vec<S>) -> Self {
        Self::Deterministic(Arc::new(move |_| u.clone()))
    }

    pub fn deterministic(f: impl Fn(S) -> Vec<S> + Send + Sync + 'static) -> Self {
        Self::Deterministic(Arc::new(f))
    }

    pub fn feedback(f: impl Fn(S, &[S]) -> Vec<S> + Send + Sync + 'static) -> Self {
        Self::Feedback(Arc::new(f))
    }

    /// Spike of `value` on `[start, start + width)`, on every path.
    pub fn spike(base: Self, value: Vec<S>, start: S, width: S) -> Self {
        Self::Spike {
            base: Box::new(base),
            value,
            start,
            width,
            event: None,
        }
    }

    /// Restricts a spike to the paths where `event` holds.
    pub fn with_event(self, event: impl Fn(&[S]) -> bool + Send + Sync + 'static) -> Self {
        match self {
            Self::Spike {
                base,
                value,
                start,
                width,
                ..
            } => Self::Spike {
                base,
                value,
                start,
                width,
                event: Some(Arc::new(event)),
            },
            other => other,
        }
    }

    pub fn is_feedback(&self) -> bool {
        match self {
            Self::Deterministic(_) => false,
            Self::Feedback(_) => true,
            Self::Spike { base, .. } => base.is_feedback(),
        }
    }

    /// True when the control is the same on every path.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Deterministic(_) => true,
            Self::Feedback(_) => false,
            Self::Spike { base, event, .. } => event.is_none() && base.is_deterministic(),
        }
    }

    /// Value at node `k` (time `t`) given the current state and the path's
    /// increments `ΔW_0 … ΔW_{k-1}`.
    pub fn eval(&self, grid: &TimeGrid<S>, k: usize, x: &[S], increments: &[S]) -> Vec<S> {
        let t = grid.node(k);
        match self {
            Self::Deterministic(f) => f(t),
            Self::Feedback(f) => f(t, x),
            Self::Spike {
                base,
                value,
                start,
                width,
                event,
            } => {
                let in_window = t >= *start && t < *start + *width;
                let fires = in_window
                    && event.as_ref().is_none_or(|e| {
                        let i = grid.node_at_or_before(*start).min(increments.len());
                        e(&increments[..i])
                    });
                if fires {
                    value.clone()
                } else {
                    base.eval(grid, k, x, increments)
                }
            }
        }
    }

    /// Structural problems that can be detected without simulating.
    pub fn violations(&self, grid: &TimeGrid<S>, control_box: &ControlBox<S>) -> Vec<String> {
        let mut out = Vec::new();
        if let Self::Spike {
            base,
            value,
            start,
            width,
            ..
        } = self
        {
            if !(*start >= S::zero()) || !(*width > S::zero()) || *start + *width > grid.horizon {
                out.push(format!(
                    "spike window [{start}, {}) is not inside [0, {})",
                    *start + *width,
                    grid.horizon
                ));
            }
            if !control_box.contains(value) {
                out.push(format!("spike value {value:?} is outside the control box"));
            }
            out.extend(base.violations(grid, control_box));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_switches_inside_window_only() {
        let grid = TimeGrid::new(1.0f64, 10).unwrap();
        let u = ControlProcess::spike(ControlProcess::constant(vec![0.0]), vec![1.0], 0.3, 0.2);
        let vals: Vec<f64> = (0..10).map(|k| u.eval(&grid, k, &[0.0], &[])[0]).collect();
        assert_eq!(vals, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(u.is_deterministic());
    }

    #[test]
    fn spike_event_reads_only_prefix() {
        let grid = TimeGrid::new(1.0f64, 4).unwrap();
        let u = ControlProcess::spike(ControlProcess::constant(vec![0.0]), vec![1.0], 0.5, 0.5)
            .with_event(|dw: &[f64]| {
                assert!(dw.len() <= 2);
                dw.iter().sum::<f64>() > 0.0
            });
        let up = [0.1, 0.1, -5.0, -5.0];
        let down = [-0.1, -0.1, 5.0, 5.0];
        assert_eq!(u.eval(&grid, 3, &[0.0], &up[..3])[0], 1.0);
        assert_eq!(u.eval(&grid, 3, &[0.0], &down[..3])[0], 0.0);
        assert!(!u.is_deterministic());
    }

    #[test]
    fn spike_outside_horizon_is_flagged() {
        let grid = TimeGrid::new(1.0f64, 4).unwrap();
        let b = ControlBox::symmetric(1, 1.0);
        let u = ControlProcess::spike(ControlProcess::constant(vec![0.0]), vec![2.0], 0.9, 0.2);
        assert_eq!(u.violations(&grid, &b).len(), 2);
    }
}
