//! Polynomial coefficient catalog.
//!
//! Every coefficient in a declarative problem file is a sum of monomials
//! `c · tᵃ · Π xᵢ^pᵢ · Π u_b^q_b`. Derivatives in `(x, u)` are exact.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use smallvec::{smallvec, SmallVec};

use crate::linalg::Mat;
use crate::model::scenario::{
    CostJet, FieldJet, ProcessFn, RunningCost, TerminalCost, TerminalJet, VectorField,
};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial<S> {
    pub coef: S,
    #[serde(default)]
    pub t: u32,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub u: Vec<u32>,
}

impl<S: Real> Monomial<S> {
    pub fn new(coef: S, x: Vec<u32>, u: Vec<u32>) -> Self {
        Self { coef, t: 0, x, u }
    }

    pub fn with_time_power(mut self, t: u32) -> Self {
        self.t = t;
        self
    }

    fn z_power(&self, n: usize, idx: usize) -> u32 {
        if idx < n {
            self.x.get(idx).copied().unwrap_or(0)
        } else {
            self.u.get(idx - n).copied().unwrap_or(0)
        }
    }

    /// `∂^orders` of the monomial over the stacked point `z = (x, u)`.
    fn derivative(&self, t: S, z: &[S], n: usize, orders: &[(usize, u32)]) -> S {
        let mut acc = self.coef * t.powi(self.t as i32);
        for (k, &zk) in z.iter().enumerate() {
            let p = self.z_power(n, k);
            let ord: u32 = orders
                .iter()
                .filter(|(i, _)| *i == k)
                .map(|(_, o)| *o)
                .sum();
            acc *= power_derivative(zk, p, ord);
            if acc == S::zero() {
                return acc;
            }
        }
        acc
    }
}

/// `d^ord/dz^ord z^p`.
fn power_derivative<S: Real>(z: S, p: u32, ord: u32) -> S {
    if ord > p {
        return S::zero();
    }
    let mut falling = S::one();
    for j in 0..ord {
        falling *= S::from_u32(p - j).expect("small exponent");
    }
    falling * z.powi((p - ord) as i32)
}

/// A polynomial in `(t, x, u)` with `n` state and `m` control variables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polynomial<S> {
    pub n: usize,
    pub m: usize,
    pub terms: Vec<Monomial<S>>,
}

impl<S: Real> Polynomial<S> {
    pub fn new(n: usize, m: usize, terms: Vec<Monomial<S>>) -> Self {
        Self { n, m, terms }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self::new(n, m, Vec::new())
    }

    pub fn constant(n: usize, m: usize, c: S) -> Self {
        Self::new(n, m, vec![Monomial::new(c, vec![], vec![])])
    }

    /// Exponents that index past the declared dimensions.
    pub fn dimension_error(&self) -> Option<String> {
        for term in &self.terms {
            if term.x.len() > self.n && term.x[self.n..].iter().any(|&p| p > 0) {
                return Some(format!("monomial uses x index ≥ {}", self.n));
            }
            if term.u.len() > self.m && term.u[self.m..].iter().any(|&p| p > 0) {
                return Some(format!("monomial uses u index ≥ {}", self.m));
            }
        }
        None
    }

    pub fn depends_on_state(&self) -> bool {
        self.terms
            .iter()
            .any(|t| t.coef != S::zero() && t.x.iter().any(|&p| p > 0))
    }

    pub fn depends_on_control(&self) -> bool {
        self.terms
            .iter()
            .any(|t| t.coef != S::zero() && t.u.iter().any(|&p| p > 0))
    }

    fn stack(x: &[S], u: &[S]) -> Vec<S> {
        x.iter().chain(u).copied().collect()
    }

    pub fn eval(&self, t: S, x: &[S], u: &[S]) -> S {
        let z = Self::stack(x, u);
        self.terms
            .iter()
            .map(|m| m.derivative(t, &z, self.n, &[]))
            .sum()
    }

    /// Feeds every nonzero contribution to the value, gradient and upper
    /// Hessian over `z = (x, u)` to `sink`.
    fn visit_second_order(&self, t: S, z: &[S], mut sink: impl FnMut(Slot, S)) {
        let d = z.len();
        let mut f0: SmallVec<[S; 8]> = smallvec![S::zero(); d];
        let mut f1: SmallVec<[S; 8]> = smallvec![S::zero(); d];
        let mut f2: SmallVec<[S; 8]> = smallvec![S::zero(); d];
        for term in &self.terms {
            let c = term.coef * t.powi(term.t as i32);
            if c == S::zero() {
                continue;
            }
            for k in 0..d {
                let p = term.z_power(self.n, k);
                f0[k] = power_derivative(z[k], p, 0);
                f1[k] = power_derivative(z[k], p, 1);
                f2[k] = power_derivative(z[k], p, 2);
            }
            let except = |a: usize, b: usize| {
                (0..d)
                    .filter(|&k| k != a && k != b)
                    .fold(c, |acc, k| acc * f0[k])
            };
            sink(Slot::Value, except(d, d));
            for i in 0..d {
                if f1[i] == S::zero() && f2[i] == S::zero() {
                    continue;
                }
                let rest = except(i, d);
                sink(Slot::Grad(i), f1[i] * rest);
                sink(Slot::Hess(i, i), f2[i] * rest);
                for j in i + 1..d {
                    if f1[i] != S::zero() && f1[j] != S::zero() {
                        sink(Slot::Hess(i, j), f1[i] * f1[j] * except(i, j));
                    }
                }
            }
        }
    }

    /// Value, gradient and Hessian over `z = (x, u)` in one pass.
    fn second_order(&self, t: S, z: &[S]) -> (S, Vec<S>, Mat<S>) {
        let d = z.len();
        let mut value = S::zero();
        let mut grad = vec![S::zero(); d];
        let mut hess = Mat::zeros(d, d);
        self.visit_second_order(t, z, |slot, v| match slot {
            Slot::Value => value += v,
            Slot::Grad(i) => grad[i] += v,
            Slot::Hess(i, j) => {
                hess[(i, j)] += v;
                if i != j {
                    hess[(j, i)] += v;
                }
            }
        });
        (value, grad, hess)
    }

    /// Gradient over `z = (x, u)`.
    pub fn gradient(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        self.second_order(t, &Self::stack(x, u)).1
    }

    /// Hessian over `z = (x, u)`.
    pub fn hessian(&self, t: S, x: &[S], u: &[S]) -> Mat<S> {
        self.second_order(t, &Self::stack(x, u)).2
    }

    /// Value, gradient blocks and Hessian blocks as a scalar cost jet.
    pub fn cost_jet(&self, t: S, x: &[S], u: &[S]) -> CostJet<S> {
        let (n, m) = (self.n, self.m);
        let mut jet = CostJet {
            value: S::zero(),
            dx: smallvec![S::zero(); n],
            du: smallvec![S::zero(); m],
            dxx: Mat::zeros(n, n),
            dxu: Mat::zeros(m, n),
            duu: Mat::zeros(m, m),
        };
        let z: SmallVec<[S; 8]> = x.iter().chain(u).copied().collect();
        self.visit_second_order(t, &z, |slot, v| {
            scatter(
                n,
                slot,
                v,
                &mut jet.value,
                &mut jet.dx,
                &mut jet.du,
                &mut jet.dxx,
                &mut jet.dxu,
                &mut jet.duu,
            )
        });
        jet
    }

    /// Wraps polynomials in `(t, x)` as a closed-form process.
    pub fn process(components: Vec<Polynomial<S>>) -> ProcessFn<S> {
        Arc::new(move |t, x| {
            let none: [S; 0] = [];
            components.iter().map(|p| p.eval(t, x, &none)).collect()
        })
    }
}

/// Vector field whose components are polynomials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyField<S> {
    pub n: usize,
    pub m: usize,
    pub components: Vec<Polynomial<S>>,
}

impl<S: Real> PolyField<S> {
    pub fn new(n: usize, m: usize, components: Vec<Polynomial<S>>) -> Self {
        Self { n, m, components }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self::new(n, m, vec![Polynomial::zero(n, m); n])
    }

    /// Scalar (`n = m = 1`) field from `(coef, x power, u power)` triples.
    pub fn scalar(terms: &[(f64, u32, u32)]) -> Self {
        Self::new(1, 1, vec![scalar_poly(terms)])
    }
}

/// Scalar polynomial (`n = m = 1`) from `(coef, x power, u power)` triples.
pub fn scalar_poly<S: Real>(terms: &[(f64, u32, u32)]) -> Polynomial<S> {
    Polynomial::new(
        1,
        1,
        terms
            .iter()
            .map(|&(c, px, pu)| Monomial::new(S::lit(c), vec![px], vec![pu]))
            .collect(),
    )
}

impl<S: Real> VectorField<S> for PolyField<S> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn value(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        self.components.iter().map(|p| p.eval(t, x, u)).collect()
    }
    fn jet(&self, t: S, x: &[S], u: &[S]) -> FieldJet<S> {
        let (n, m) = (self.n, self.m);
        let rows = self.components.len();
        let mut jet = FieldJet {
            value: smallvec![S::zero(); rows],
            dx: Mat::zeros(rows, n),
            du: Mat::zeros(rows, m),
            dxx: (0..rows).map(|_| Mat::zeros(n, n)).collect(),
            dxu: (0..rows).map(|_| Mat::zeros(m, n)).collect(),
            duu: (0..rows).map(|_| Mat::zeros(m, m)).collect(),
        };
        let z: SmallVec<[S; 8]> = x.iter().chain(u).copied().collect();
        for (i, p) in self.components.iter().enumerate() {
            p.visit_second_order(t, &z, |slot, v| match slot {
                Slot::Value => jet.value[i] += v,
                Slot::Grad(j) if j < n => jet.dx[(i, j)] += v,
                Slot::Grad(j) => jet.du[(i, j - n)] += v,
                Slot::Hess(a, b) => hess_scatter(
                    n,
                    a,
                    b,
                    v,
                    &mut jet.dxx[i],
                    &mut jet.dxu[i],
                    &mut jet.duu[i],
                ),
            });
        }
        jet
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Value,
    Grad(usize),
    /// Upper-triangle entry `(i, j)`, `i ≤ j`.
    Hess(usize, usize),
}

/// Adds an upper-triangle Hessian entry over `z = (x, u)` to the blocks.
fn hess_scatter<S: Real>(
    n: usize,
    i: usize,
    j: usize,
    v: S,
    dxx: &mut Mat<S>,
    dxu: &mut Mat<S>,
    duu: &mut Mat<S>,
) {
    match (i < n, j < n) {
        (true, true) => {
            dxx[(i, j)] += v;
            if i != j {
                dxx[(j, i)] += v;
            }
        }
        (true, false) => dxu[(j - n, i)] += v,
        (false, false) => {
            duu[(i - n, j - n)] += v;
            if i != j {
                duu[(j - n, i - n)] += v;
            }
        }
        (false, true) => unreachable!("upper triangle"),
    }
}

#[allow(clippy::too_many_arguments)]
fn scatter<S: Real>(
    n: usize,
    slot: Slot,
    v: S,
    value: &mut S,
    dx: &mut [S],
    du: &mut [S],
    dxx: &mut Mat<S>,
    dxu: &mut Mat<S>,
    duu: &mut Mat<S>,
) {
    match slot {
        Slot::Value => *value += v,
        Slot::Grad(j) if j < n => dx[j] += v,
        Slot::Grad(j) => du[j - n] += v,
        Slot::Hess(a, b) => hess_scatter(n, a, b, v, dxx, dxu, duu),
    }
}

/// Polynomial running cost with exact derivatives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyCost<S>(pub Polynomial<S>);

impl<S: Real> RunningCost<S> for PolyCost<S> {
    fn state_dim(&self) -> usize {
        self.0.n
    }
    fn control_dim(&self) -> usize {
        self.0.m
    }
    fn value(&self, t: S, x: &[S], u: &[S]) -> S {
        self.0.eval(t, x, u)
    }
    fn jet(&self, t: S, x: &[S], u: &[S]) -> Option<CostJet<S>> {
        Some(self.0.cost_jet(t, x, u))
    }
}

/// Polynomial terminal cost in `x` only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyTerminal<S>(pub Polynomial<S>);

impl<S: Real> TerminalCost<S> for PolyTerminal<S> {
    fn state_dim(&self) -> usize {
        self.0.n
    }
    fn value(&self, x: &[S]) -> S {
        self.0.eval(S::zero(), x, &[])
    }
    fn jet(&self, x: &[S]) -> Option<TerminalJet<S>> {
        let n = self.0.n;
        let (value, g, h) = self.0.second_order(S::zero(), x);
        let mut dxx = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dxx[(i, j)] = h[(i, j)];
            }
        }
        Some(TerminalJet {
            value,
            dx: g[..n].to_vec(),
            dxx,
        })
    }
}
