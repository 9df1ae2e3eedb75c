//! Coefficient families of a single uncertainty scenario.
//!
//! Drift and diffusion are vector fields `(t, x, u) ↦ ℝⁿ` and must supply
//! analytic derivatives up to second order. Running and terminal costs may
//! instead return `None` from `jet`, in which case central finite differences
//! are used.
//!
//! Derivative layout, for a field with components `i = 0..n`:
//! - `dx[(i, j)] = ∂b_i/∂x_j` (n×n), `du[(i, a)] = ∂b_i/∂u_a` (n×m)
//! - `dxx[i]` is the n×n Hessian of `b_i` in `x`
//! - `dxu[i][(a, j)] = ∂²b_i/∂u_a∂x_j` (m×n)
//! - `duu[i]` is the m×m Hessian of `b_i` in `u`
//!
//! Scalar costs use the same blocks without the component index.

use std::sync::Arc;

use smallvec::{smallvec, SmallVec};

use crate::linalg::{Coords, Mat};

/// Per-component matrices of a vector field, inline up to two components.
pub type Blocks<S> = SmallVec<[Mat<S>; 2]>;
use crate::scalar::Real;

/// Value and derivatives of a vector field at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldJet<S> {
    pub value: Coords<S>,
    pub dx: Mat<S>,
    pub du: Mat<S>,
    pub dxx: Blocks<S>,
    pub dxu: Blocks<S>,
    pub duu: Blocks<S>,
}

impl<S: Real> FieldJet<S> {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            value: smallvec![S::zero(); n],
            dx: Mat::zeros(n, n),
            du: Mat::zeros(n, m),
            dxx: smallvec![Mat::zeros(n, n); n],
            dxu: smallvec![Mat::zeros(m, n); n],
            duu: smallvec![Mat::zeros(m, m); n],
        }
    }

    /// Describes the first block whose shape disagrees with `(n, m)`.
    pub fn shape_error(&self, n: usize, m: usize) -> Option<String> {
        if self.value.len() != n {
            return Some(format!(
                "value has length {}, expected {n}",
                self.value.len()
            ));
        }
        if self.dx.shape() != (n, n) {
            return Some(format!(
                "∂_x has shape {:?}, expected {:?}",
                self.dx.shape(),
                (n, n)
            ));
        }
        if self.du.shape() != (n, m) {
            return Some(format!(
                "∂_u has shape {:?}, expected {:?}",
                self.du.shape(),
                (n, m)
            ));
        }
        let blocks: [(&str, &Blocks<S>, (usize, usize)); 3] = [
            ("∂_xx", &self.dxx, (n, n)),
            ("∂_xu", &self.dxu, (m, n)),
            ("∂_uu", &self.duu, (m, m)),
        ];
        for (name, block, shape) in blocks {
            if block.len() != n {
                return Some(format!(
                    "{name} has {} components, expected {n}",
                    block.len()
                ));
            }
            if let Some(bad) = block.iter().find(|b| b.shape() != shape) {
                return Some(format!(
                    "{name} component has shape {:?}, expected {shape:?}",
                    bad.shape()
                ));
            }
        }
        None
    }

    /// `Σ_i e_i · (aᵀ D_i c)` for a stack of per-component matrices `D_i`.
    pub fn contract(blocks: &[Mat<S>], a: &[S], c: &[S]) -> Coords<S> {
        blocks.iter().map(|d| d.bilinear(a, c)).collect()
    }
}

/// Value and derivatives of a scalar running cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostJet<S> {
    pub value: S,
    pub dx: Coords<S>,
    pub du: Coords<S>,
    pub dxx: Mat<S>,
    pub dxu: Mat<S>,
    pub duu: Mat<S>,
}

/// Value and derivatives of a terminal cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalJet<S> {
    pub value: S,
    pub dx: Vec<S>,
    pub dxx: Mat<S>,
}

pub trait VectorField<S: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn value(&self, t: S, x: &[S], u: &[S]) -> Vec<S>;
    fn jet(&self, t: S, x: &[S], u: &[S]) -> FieldJet<S>;
}

pub trait RunningCost<S: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn value(&self, t: S, x: &[S], u: &[S]) -> S;
    /// Analytic derivatives, or `None` to request finite differences.
    fn jet(&self, _t: S, _x: &[S], _u: &[S]) -> Option<CostJet<S>> {
        None
    }
}

pub trait TerminalCost<S: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn value(&self, x: &[S]) -> S;
    /// Analytic derivatives, or `None` to request finite differences.
    fn jet(&self, _x: &[S]) -> Option<TerminalJet<S>> {
        None
    }
}

/// A process given in closed form as a function of `(t, x̄_γ(t))`, flattened
/// row-major when matrix valued.
pub type ProcessFn<S> = Arc<dyn Fn(S, &[S]) -> Vec<S> + Send + Sync>;

/// User-supplied closed forms for both adjoint pairs of one scenario.
#[derive(Clone)]
pub struct AdjointClosedForm<S> {
    pub p1: ProcessFn<S>,
    pub q1: ProcessFn<S>,
    pub p2: ProcessFn<S>,
    pub q2: ProcessFn<S>,
}

impl<S: Real> AdjointClosedForm<S> {
    /// Closed forms that ignore `(t, x)`.
    pub fn constant(p1: Vec<S>, q1: Vec<S>, p2: Vec<S>, q2: Vec<S>) -> Self {
        let c = |v: Vec<S>| -> ProcessFn<S> { Arc::new(move |_, _| v.clone()) };
        Self {
            p1: c(p1),
            q1: c(q1),
            p2: c(p2),
            q2: c(q2),
        }
    }
}

/// One element γ of the finite uncertainty set.
#[derive(Clone)]
pub struct Scenario<S: Real> {
    pub name: String,
    pub drift: Arc<dyn VectorField<S>>,
    pub diffusion: Arc<dyn VectorField<S>>,
    pub running: Arc<dyn RunningCost<S>>,
    pub terminal: Arc<dyn TerminalCost<S>>,
    pub adjoint: Option<AdjointClosedForm<S>>,
    /// Closed form of `∇𝕊_γ` (m×n, row-major) for the closed-form Malliavin mode.
    pub nabla_s: Option<ProcessFn<S>>,
}

impl<S: Real> std::fmt::Debug for Scenario<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim())
            .field("control_dim", &self.control_dim())
            .field("analytic_adjoint", &self.adjoint.is_some())
            .finish()
    }
}

impl<S: Real> Scenario<S> {
    pub fn new(
        name: impl Into<String>,
        drift: Arc<dyn VectorField<S>>,
        diffusion: Arc<dyn VectorField<S>>,
        running: Arc<dyn RunningCost<S>>,
        terminal: Arc<dyn TerminalCost<S>>,
    ) -> Self {
        Self {
            name: name.into(),
            drift,
            diffusion,
            running,
            terminal,
            adjoint: None,
            nabla_s: None,
        }
    }

    pub fn with_adjoint(mut self, closed: AdjointClosedForm<S>) -> Self {
        self.adjoint = Some(closed);
        self
    }

    pub fn with_nabla_s(mut self, nabla: ProcessFn<S>) -> Self {
        self.nabla_s = Some(nabla);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.drift.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.drift.control_dim()
    }

    pub fn drift(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        self.drift.value(t, x, u)
    }

    pub fn diffusion(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        self.diffusion.value(t, x, u)
    }

    pub fn running_cost(&self, t: S, x: &[S], u: &[S]) -> S {
        self.running.value(t, x, u)
    }

    pub fn terminal_cost(&self, x: &[S]) -> S {
        self.terminal.value(x)
    }

    /// Whether both cost functions provide analytic derivatives at `(t, x, u)`.
    pub fn costs_are_analytic(&self, t: S, x: &[S], u: &[S]) -> bool {
        self.running.jet(t, x, u).is_some() && self.terminal.jet(x).is_some()
    }

    pub fn running_jet(&self, t: S, x: &[S], u: &[S]) -> CostJet<S> {
        self.running
            .jet(t, x, u)
            .unwrap_or_else(|| fd_cost_jet(self.running.as_ref(), t, x, u))
    }

    pub fn terminal_jet(&self, x: &[S]) -> TerminalJet<S> {
        self.terminal
            .jet(x)
            .unwrap_or_else(|| fd_terminal_jet(self.terminal.as_ref(), x))
    }
}

/// Central first and second differences of `g` over the stacked point `z`.
fn fd_gradient_hessian<S: Real>(z: &[S], g: impl Fn(&[S]) -> S) -> (S, Vec<S>, Mat<S>) {
    let d = z.len();
    let g0 = g(z);
    let mut grad = vec![S::zero(); d];
    let mut hess = Mat::zeros(d, d);
    let two = S::lit(2.0);
    let four = S::lit(4.0);
    let mut w = z.to_vec();
    for i in 0..d {
        let h = S::fd_step(S::one().max(z[i].abs()));
        w[i] = z[i] + h;
        let gp = g(&w);
        w[i] = z[i] - h;
        let gm = g(&w);
        w[i] = z[i];
        grad[i] = (gp - gm) / (two * h);

        let h2 = S::fd_step_second(S::one().max(z[i].abs()));
        w[i] = z[i] + h2;
        let gp2 = g(&w);
        w[i] = z[i] - h2;
        let gm2 = g(&w);
        w[i] = z[i];
        hess[(i, i)] = (gp2 - two * g0 + gm2) / (h2 * h2);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let hi = S::fd_step_second(S::one().max(z[i].abs()));
            let hj = S::fd_step_second(S::one().max(z[j].abs()));
            let mut eval = |si: S, sj: S| {
                w[i] = z[i] + si * hi;
                w[j] = z[j] + sj * hj;
                let r = g(&w);
                w[i] = z[i];
                w[j] = z[j];
                r
            };
            let one = S::one();
            let v = (eval(one, one) - eval(one, -one) - eval(-one, one) + eval(-one, -one))
                / (four * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g0, grad, hess)
}

/// Finite-difference jet of a running cost.
pub fn fd_cost_jet<S: Real>(cost: &dyn RunningCost<S>, t: S, x: &[S], u: &[S]) -> CostJet<S> {
    let n = x.len();
    let m = u.len();
    let z: Vec<S> = x.iter().chain(u).copied().collect();
    let (value, grad, hess) = fd_gradient_hessian(&z, |w| cost.value(t, &w[..n], &w[n..]));
    let mut dxx = Mat::zeros(n, n);
    let mut dxu = Mat::zeros(m, n);
    let mut duu = Mat::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            dxx[(i, j)] = hess[(i, j)];
        }
    }
    for a in 0..m {
        for j in 0..n {
            dxu[(a, j)] = hess[(n + a, j)];
        }
        for b in 0..m {
            duu[(a, b)] = hess[(n + a, n + b)];
        }
    }
    CostJet {
        value,
        dx: SmallVec::from_slice(&grad[..n]),
        du: SmallVec::from_slice(&grad[n..]),
        dxx,
        dxu,
        duu,
    }
}

/// Finite-difference jet of a terminal cost.
pub fn fd_terminal_jet<S: Real>(cost: &dyn TerminalCost<S>, x: &[S]) -> TerminalJet<S> {
    let (value, dx, dxx) = fd_gradient_hessian(x, |w| cost.value(w));
    TerminalJet { value, dx, dxx }
}

type FieldValueFn<S> = dyn Fn(S, &[S], &[S]) -> Vec<S> + Send + Sync;
type FieldJetFn<S> = dyn Fn(S, &[S], &[S]) -> FieldJet<S> + Send + Sync;

/// Vector field assembled from closures.
pub struct FnField<S> {
    n: usize,
    m: usize,
    value: Box<FieldValueFn<S>>,
    jet: Box<FieldJetFn<S>>,
}

impl<S: Real> FnField<S> {
    pub fn new(
        n: usize,
        m: usize,
        value: impl Fn(S, &[S], &[S]) -> Vec<S> + Send + Sync + 'static,
        jet: impl Fn(S, &[S], &[S]) -> FieldJet<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            m,
            value: Box::new(value),
            jet: Box::new(jet),
        }
    }
}

impl<S: Real> VectorField<S> for FnField<S> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn value(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        (self.value)(t, x, u)
    }
    fn jet(&self, t: S, x: &[S], u: &[S]) -> FieldJet<S> {
        (self.jet)(t, x, u)
    }
}

type CostValueFn<S> = dyn Fn(S, &[S], &[S]) -> S + Send + Sync;
type CostJetFn<S> = dyn Fn(S, &[S], &[S]) -> CostJet<S> + Send + Sync;

/// Running cost from a closure; derivatives fall back to finite differences
/// unless a jet closure is attached.
pub struct FnCost<S> {
    n: usize,
    m: usize,
    value: Box<CostValueFn<S>>,
    jet: Option<Box<CostJetFn<S>>>,
}

impl<S: Real> FnCost<S> {
    pub fn new(
        n: usize,
        m: usize,
        value: impl Fn(S, &[S], &[S]) -> S + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            m,
            value: Box::new(value),
            jet: None,
        }
    }

    pub fn with_jet(
        mut self,
        jet: impl Fn(S, &[S], &[S]) -> CostJet<S> + Send + Sync + 'static,
    ) -> Self {
        self.jet = Some(Box::new(jet));
        self
    }
}

impl<S: Real> RunningCost<S> for FnCost<S> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn value(&self, t: S, x: &[S], u: &[S]) -> S {
        (self.value)(t, x, u)
    }
    fn jet(&self, t: S, x: &[S], u: &[S]) -> Option<CostJet<S>> {
        self.jet.as_ref().map(|j| j(t, x, u))
    }
}

type TerminalValueFn<S> = dyn Fn(&[S]) -> S + Send + Sync;
type TerminalJetFn<S> = dyn Fn(&[S]) -> TerminalJet<S> + Send + Sync;

/// Terminal cost from a closure, with optional analytic jet.
pub struct FnTerminal<S> {
    n: usize,
    value: Box<TerminalValueFn<S>>,
    jet: Option<Box<TerminalJetFn<S>>>,
}

impl<S: Real> FnTerminal<S> {
    pub fn new(n: usize, value: impl Fn(&[S]) -> S + Send + Sync + 'static) -> Self {
        Self {
            n,
            value: Box::new(value),
            jet: None,
        }
    }

    pub fn with_jet(
        mut self,
        jet: impl Fn(&[S]) -> TerminalJet<S> + Send + Sync + 'static,
    ) -> Self {
        self.jet = Some(Box::new(jet));
        self
    }
}

impl<S: Real> TerminalCost<S> for FnTerminal<S> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[S]) -> S {
        (self.value)(x)
    }
    fn jet(&self, x: &[S]) -> Option<TerminalJet<S>> {
        self.jet.as_ref().map(|j| j(x))
    }
}
