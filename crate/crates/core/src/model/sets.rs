//! The admissible control box and the polytope of uncertainty measures.

use serde::Serialize;

use crate::scalar::Real;

/// Box `U = Π [lowerᵢ, upperᵢ]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlBox<S> {
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<S: Real> ControlBox<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Self {
        Self { lower, upper }
    }

    /// Symmetric box `[-r, r]^m`.
    pub fn symmetric(m: usize, r: S) -> Self {
        Self::new(vec![-r; m], vec![r; m])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<S> {
        let half = S::lit(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| half * (l + u))
            .collect()
    }

    /// Componentwise membership with a round-off allowance of a few ulps.
    pub fn contains(&self, u: &[S]) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &h))| {
                let slack = S::epsilon() * S::lit(8.0) * (S::one() + l.abs().max(h.abs()));
                v.is_finite() && v >= l - slack && v <= h + slack
            })
    }

    pub fn project(&self, u: &[S]) -> Vec<S> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &h))| v.max(l).min(h))
            .collect()
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lower.len() != self.upper.len() {
            out.push(format!(
                "control box bounds have different lengths ({} vs {})",
                self.lower.len(),
                self.upper.len()
            ));
            return out;
        }
        if self.lower.is_empty() {
            out.push("control box has dimension 0".into());
        }
        for (i, (&l, &h)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                out.push(format!("control box bound {i} is not finite"));
            } else if l > h {
                out.push(format!(
                    "control box lower[{i}] = {l} exceeds upper[{i}] = {h}"
                ));
            }
        }
        out
    }
}

/// Convex hull of finitely many probability vectors over the scenarios.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurePolytope<S> {
    pub vertices: Vec<Vec<S>>,
}

impl<S: Real> MeasurePolytope<S> {
    pub fn new(vertices: Vec<Vec<S>>) -> Self {
        Self { vertices }
    }

    /// Whole simplex over `k` scenarios (its vertices are the Dirac measures).
    pub fn simplex(k: usize) -> Self {
        let vertices = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { S::one() } else { S::zero() })
                    .collect()
            })
            .collect();
        Self { vertices }
    }

    pub fn scenario_count(&self) -> usize {
        self.vertices.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Tolerance for the unit-mass check: `1e-12`, widened to a few ulps for
    /// single precision.
    pub fn mass_tolerance() -> S {
        S::lit(1e-12).max(S::epsilon() * S::lit(16.0))
    }

    /// Point of the hull given convex-combination weights over the vertices.
    pub fn combine(&self, weights: &[S]) -> Vec<S> {
        let k = self.scenario_count();
        let mut out = vec![S::zero(); k];
        for (w, v) in weights.iter().zip(&self.vertices) {
            for (o, &p) in out.iter_mut().zip(v) {
                *o += *w * p;
            }
        }
        out
    }

    pub(crate) fn violations(&self, scenarios: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.vertices.is_empty() {
            out.push("measure polytope has no vertices".into());
            return out;
        }
        let tol = Self::mass_tolerance();
        for (vi, v) in self.vertices.iter().enumerate() {
            if v.len() != scenarios {
                out.push(format!(
                    "vertex {vi} has {} weights but there are {scenarios} scenarios",
                    v.len()
                ));
                continue;
            }
            if let Some((j, w)) = v
                .iter()
                .enumerate()
                .find(|(_, w)| !(**w >= S::zero()) || !w.is_finite())
            {
                out.push(format!(
                    "vertex {vi} weight {j} = {w} is negative or not finite"
                ));
            }
            let mass: S = v.iter().copied().sum();
            if (mass - S::one()).abs() > tol {
                out.push(format!("vertex {vi} mass {mass} ≠ 1"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_membership_and_projection() {
        let b = ControlBox::symmetric(2, 1.0f64);
        assert!(b.contains(&[1.0, -1.0]));
        assert!(!b.contains(&[1.1, 0.0]));
        assert!(!b.contains(&[0.0]));
        assert_eq!(b.project(&[2.0, -0.5]), vec![1.0, -0.5]);
    }

    #[test]
    fn mass_violation_is_reported() {
        let p = MeasurePolytope::new(vec![vec![0.5f64, 0.6]]);
        let v = p.violations(2);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("mass 1.1 ≠ 1"), "{v:?}");
    }

    #[test]
    fn simplex_vertices_are_valid() {
        let p = MeasurePolytope::<f64>::simplex(3);
        assert!(p.violations(3).is_empty());
        assert_eq!(p.combine(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn negative_weight_is_reported() {
        let p = MeasurePolytope::new(vec![vec![1.5f64, -0.5]]);
        assert!(p.violations(2).iter().any(|m| m.contains("negative")));
    }
}
