//! Backward solvers for the first and second adjoint pairs.

use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::regression::{Design, RegressionBasis};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianJet;
use crate::linalg::Mat;
use crate::model::scenario::ProcessFn;
use crate::model::spec::{AdjointMode, ProblemSpec};
use crate::scalar::Real;
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{scenario_of, StatePath};
use crate::simulate::panel::Panel;

/// `(P₁, Q₁)`, width n.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstAdjoint<S> {
    pub p1: Panel<S>,
    pub q1: Panel<S>,
}

/// `(P₂, Q₂)`, width n², row-major and symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondAdjoint<S> {
    pub p2: Panel<S>,
    pub q2: Panel<S>,
}

/// Both adjoint pairs of one scenario along its reference path.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointProcesses<S> {
    pub scenario: usize,
    pub mode: AdjointMode,
    pub p1: Panel<S>,
    pub q1: Panel<S>,
    pub p2: Panel<S>,
    pub q2: Panel<S>,
    pub diagnostics: AdjointDiagnostics,
}

/// Side information collected while solving.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AdjointDiagnostics {
    /// Largest gap between a closed form at `T` and the terminal condition
    /// that replaced it (analytic mode only).
    pub terminal_mismatch: f64,
    /// Nodes at which the design matrix needed the ridge term.
    pub ridged_nodes: usize,
}

impl<S: Real> AdjointProcesses<S> {
    pub fn first(&self) -> FirstAdjoint<S> {
        FirstAdjoint {
            p1: self.p1.clone(),
            q1: self.q1.clone(),
        }
    }

    /// Largest `|M − Mᵀ|` over the `P₂` and `Q₂` slots.
    pub fn max_asymmetry(&self) -> S {
        let n = (self.p2.width() as f64).sqrt() as usize;
        let mut worst = S::zero();
        for panel in [&self.p2, &self.q2] {
            for p in 0..panel.paths() {
                for k in 0..panel.nodes() {
                    worst = worst.max(panel.mat_at(p, k, n).asymmetry());
                }
            }
        }
        worst
    }
}

fn check_reference<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
) -> Result<()> {
    let nodes = bundle.grid().nodes();
    if reference.x.paths() != bundle.n_paths()
        || reference.x.nodes() != nodes
        || reference.x.width() != spec.state_dim()
    {
        return Err(Error::InvalidInput(format!(
            "reference state has shape ({}, {}, {}), expected ({}, {nodes}, {})",
            reference.x.paths(),
            reference.x.nodes(),
            reference.x.width(),
            bundle.n_paths(),
            spec.state_dim()
        )));
    }
    Ok(())
}

/// Evaluates `value(t_k, x̄_k)` into a panel, checking its length.
fn closed_form_panel<S: Real>(
    f: &ProcessFn<S>,
    width: usize,
    what: &str,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let grid = *bundle.grid();
    Panel::par_build(bundle.n_paths(), grid.nodes(), width, |p, chunk| {
        for k in 0..grid.nodes() {
            let v = f(grid.node(k), reference.x.at(p, k));
            if v.len() != width {
                return Err(Error::InvalidInput(format!(
                    "closed form {what} has length {}, expected {width}",
                    v.len()
                )));
            }
            chunk[k * width..(k + 1) * width].copy_from_slice(&v);
        }
        Ok(())
    })
}

/// Overwrites node N with `terminal` and returns the largest replaced gap.
fn impose_terminal<S: Real>(panel: &mut Panel<S>, terminal: &[S]) -> S {
    let w = panel.width();
    let last = panel.nodes() - 1;
    let mut gap = S::zero();
    for p in 0..panel.paths() {
        let slot = panel.slot_mut(p, last);
        for (s, &t) in slot.iter_mut().zip(&terminal[p * w..(p + 1) * w]) {
            gap = gap.max((*s - t).abs());
            *s = t;
        }
    }
    gap
}

fn node_major_to_panel<S: Real>(columns: &[Vec<S>], paths: usize, width: usize) -> Panel<S> {
    let nodes = columns.len();
    let mut panel = Panel::zeros(paths, nodes, width);
    for (k, col) in columns.iter().enumerate() {
        for p in 0..paths {
            panel
                .slot_mut(p, k)
                .copy_from_slice(&col[p * width..(p + 1) * width]);
        }
    }
    panel
}

fn symmetrize_rows<S: Real>(values: &mut [S], n: usize) {
    for block in values.chunks_exact_mut(n * n) {
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (block[i * n + j] + block[j * n + i]) * S::lit(0.5);
                block[i * n + j] = avg;
                block[j * n + i] = avg;
            }
        }
    }
}

/// Least-squares backward induction on the reference path. At each node,
/// with conditional expectations regressed on features of `x̄_k`:
///
/// - `P̂ = E[P_{k+1} | x̄_k]`
/// - `Q_k = E[(P_{k+1} − P̂) ΔW_k | x̄_k] / Δt`
/// - `P_k = E[target(p, k, P_{k+1}, P_{k+1} − P̂) | x̄_k]`
///
/// and `Q_N = Q_{N−1}`.
struct Induction<'a, S: Real> {
    basis: RegressionBasis,
    ridge: bool,
    scenario: usize,
    reference: &'a StatePath<S>,
    bundle: &'a PathBundle<S>,
    width: usize,
    symmetric: Option<usize>,
}

impl<S: Real> Induction<'_, S> {
    fn run<T>(&self, terminal: Vec<S>, target: T) -> Result<(Panel<S>, Panel<S>, usize)>
    where
        T: Fn(usize, usize, &[S], &[S]) -> Vec<S> + Sync,
    {
        let grid = *self.bundle.grid();
        let paths = self.bundle.n_paths();
        let w = self.width;
        let dt = grid.dt();
        let steps = grid.steps;
        let mut p_cols: Vec<Vec<S>> = vec![Vec::new(); steps + 1];
        let mut q_cols: Vec<Vec<S>> = vec![Vec::new(); steps + 1];
        p_cols[steps] = terminal;
        let mut ridged = 0;
        for k in (0..steps).rev() {
            let states: Vec<&[S]> = (0..paths).map(|p| self.reference.x.at(p, k)).collect();
            let design = Design::new(&self.basis, &states, self.ridge, self.scenario, k)?;
            if design.ridged {
                ridged += 1;
            }
            let next = &p_cols[k + 1];
            let mut centered = design.fit(next, w);
            for (c, &n) in centered.iter_mut().zip(next.iter()) {
                *c = n - *c;
            }
            let mut q_target = vec![S::zero(); paths * w];
            q_target.par_chunks_mut(w).enumerate().for_each(|(p, out)| {
                let scale = self.bundle.increment(p, k) / dt;
                for (o, &c) in out.iter_mut().zip(&centered[p * w..(p + 1) * w]) {
                    *o = c * scale;
                }
            });
            let mut q = design.fit(&q_target, w);
            let mut p_target = vec![S::zero(); paths * w];
            p_target.par_chunks_mut(w).enumerate().for_each(|(p, out)| {
                let slot = p * w..(p + 1) * w;
                out.copy_from_slice(&target(p, k, &next[slot.clone()], &centered[slot]));
            });
            let mut pk = design.fit(&p_target, w);
            if let Some(n) = self.symmetric {
                symmetrize_rows(&mut q, n);
                symmetrize_rows(&mut pk, n);
            }
            if let Some(i) = pk.iter().chain(&q).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    quantity: "adjoint",
                    scenario: self.scenario,
                    path: (i % (paths * w)) / w,
                    step: k,
                });
            }
            p_cols[k] = pk;
            q_cols[k] = q;
        }
        q_cols[steps] = q_cols[steps.saturating_sub(1)].clone();
        Ok((
            node_major_to_panel(&p_cols, paths, w),
            node_major_to_panel(&q_cols, paths, w),
            ridged,
        ))
    }
}

fn terminal_values<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
    second: bool,
) -> Result<Vec<S>> {
    let sc = scenario_of(spec, reference.scenario)?;
    let n = spec.state_dim();
    let last = bundle.grid().steps;
    let w = if second { n * n } else { n };
    let mut out = vec![S::zero(); bundle.n_paths() * w];
    out.par_chunks_mut(w).enumerate().for_each(|(p, slot)| {
        let jet = sc.terminal_jet(reference.x.at(p, last));
        if second {
            for (o, &h) in slot.iter_mut().zip(jet.dxx.as_slice()) {
                *o = -h;
            }
        } else {
            for (o, &h) in slot.iter_mut().zip(&jet.dx) {
                *o = -h;
            }
        }
    });
    if second {
        symmetrize_rows(&mut out, n);
    }
    Ok(out)
}

fn basis_for(mode: AdjointMode, n: usize) -> Option<(RegressionBasis, bool)> {
    match mode {
        AdjointMode::Analytic => None,
        AdjointMode::Regression { degree, ridge } => Some((RegressionBasis::new(n, degree), ridge)),
    }
}

/// `dP₁ = −[∂_x bᵀP₁ + ∂_x σᵀQ₁ − ∂_x f]dt + Q₁dW`, `P₁(T) = −∂_x h(x̄(T))`.
///
/// Regression mode is the discrete adjoint of the Euler scheme:
/// `P_k = E[AᵀP_{k+1} | x̄_k] − Δt ∂_x f` with `A = I + ∂_x b Δt + ∂_x σ ΔW_k`.
///
/// Analytic mode evaluates the scenario's closed forms at `(t_k, x̄_k)` and
/// replaces node N with the exact terminal condition. Returns the pair and
/// the diagnostics.
pub fn solve_adjoint_first<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
    mode: AdjointMode,
) -> Result<(FirstAdjoint<S>, AdjointDiagnostics)> {
    check_reference(spec, reference, bundle)?;
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    let n = spec.state_dim();
    let terminal = terminal_values(spec, reference, bundle, false)?;
    let Some((basis, ridge)) = basis_for(mode, n) else {
        let closed = sc.adjoint.as_ref().ok_or(Error::MissingClosedForm {
            scenario,
            what: "P1/Q1",
        })?;
        let mut p1 = closed_form_panel(&closed.p1, n, "P1", reference, bundle)?;
        let q1 = closed_form_panel(&closed.q1, n, "Q1", reference, bundle)?;
        let gap = impose_terminal(&mut p1, &terminal);
        let diag = AdjointDiagnostics {
            terminal_mismatch: gap.as_f64(),
            ridged_nodes: 0,
        };
        return Ok((FirstAdjoint { p1, q1 }, diag));
    };
    let grid = *bundle.grid();
    let dt = grid.dt();
    let induction = Induction {
        basis,
        ridge,
        scenario,
        reference,
        bundle,
        width: n,
        symmetric: None,
    };
    let (p1, q1, ridged) = induction.run(terminal, |p, k, next, centered| {
        let t = grid.node(k);
        let x = reference.x.at(p, k);
        let u = reference.u.at(p, k);
        let b = sc.drift.jet(t, x, u);
        let s = sc.diffusion.jet(t, x, u);
        let f = sc.running_jet(t, x, u);
        let dw = bundle.increment(p, k);
        let drift = b.dx.transpose().mul_vec(next);
        let noise = s.dx.transpose().mul_vec(centered);
        (0..n)
            .map(|i| next[i] + dt * (drift[i] - f.dx[i]) + dw * noise[i])
            .collect()
    })?;
    Ok((
        FirstAdjoint { p1, q1 },
        AdjointDiagnostics {
            terminal_mismatch: 0.0,
            ridged_nodes: ridged,
        },
    ))
}

/// `AᵀMA + Δt·∂_xx H` for the Euler factor `A = I + ∂_x b Δt + ∂_x σ ΔW`,
/// with `C = M − E[M | x̄_k]` in place of `M` wherever `ΔW` enters linearly.
fn second_order_target<S: Real>(
    bx: &Mat<S>,
    sx: &Mat<S>,
    m: &Mat<S>,
    c: &Mat<S>,
    h_xx: &Mat<S>,
    dt: S,
    dw: S,
) -> Mat<S> {
    let bxt = bx.transpose();
    let sxt = sx.transpose();
    let mut out = m + &(&(&bxt * m) + &(m * bx)).scale(dt);
    out = &out + &(&(&sxt * c) + &(c * sx)).scale(dw);
    out = &out + &(&(&sxt * m) * sx).scale(dw * dw);
    out = &out + &(&(&bxt * m) * bx).scale(dt * dt);
    out = &out + &(&(&(&bxt * c) * sx) + &(&(&sxt * c) * bx)).scale(dt * dw);
    &out + &h_xx.scale(dt)
}

/// `dP₂ = −[∂_x bᵀP₂ + P₂∂_x b + ∂_x σᵀP₂∂_x σ + ∂_x σᵀQ₂ + Q₂∂_x σ + ∂_xx H]dt + Q₂dW`,
/// `P₂(T) = −∂_xx h(x̄(T))`, with `∂_xx H` evaluated at `(P₁, Q₁)` from `first`.
///
/// Regression mode uses `P_k = E[AᵀP_{k+1}A | x̄_k] + Δt ∂_xx H`, which
/// expands to the driver above plus terms of order `Δt²` and `ΔW² − Δt`.
pub fn solve_adjoint_second<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
    first: &FirstAdjoint<S>,
    mode: AdjointMode,
) -> Result<(SecondAdjoint<S>, AdjointDiagnostics)> {
    check_reference(spec, reference, bundle)?;
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    let n = spec.state_dim();
    let terminal = terminal_values(spec, reference, bundle, true)?;
    let Some((basis, ridge)) = basis_for(mode, n) else {
        let closed = sc.adjoint.as_ref().ok_or(Error::MissingClosedForm {
            scenario,
            what: "P2/Q2",
        })?;
        let mut p2 = closed_form_panel(&closed.p2, n * n, "P2", reference, bundle)?;
        let q2 = closed_form_panel(&closed.q2, n * n, "Q2", reference, bundle)?;
        let gap = impose_terminal(&mut p2, &terminal);
        let diag = AdjointDiagnostics {
            terminal_mismatch: gap.as_f64(),
            ridged_nodes: 0,
        };
        return Ok((SecondAdjoint { p2, q2 }, diag));
    };
    let grid = *bundle.grid();
    let dt = grid.dt();
    let induction = Induction {
        basis,
        ridge,
        scenario,
        reference,
        bundle,
        width: n * n,
        symmetric: Some(n),
    };
    let (p2, q2, ridged) = induction.run(terminal, |p, k, next, centered| {
        let t = grid.node(k);
        let x = reference.x.at(p, k);
        let u = reference.u.at(p, k);
        let b = sc.drift.jet(t, x, u);
        let s = sc.diffusion.jet(t, x, u);
        let f = sc.running_jet(t, x, u);
        let h = HamiltonianJet::from_jets(&b, &s, &f, first.p1.at(p, k), first.q1.at(p, k));
        let m = Mat::from_row_major(n, n, next.to_vec());
        let c = Mat::from_row_major(n, n, centered.to_vec());
        second_order_target(&b.dx, &s.dx, &m, &c, &h.hess.xx, dt, bundle.increment(p, k)).into_vec()
    })?;
    Ok((
        SecondAdjoint { p2, q2 },
        AdjointDiagnostics {
            terminal_mismatch: 0.0,
            ridged_nodes: ridged,
        },
    ))
}

/// Solves both pairs in `spec.adjoint_mode`.
pub fn solve_adjoints<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
) -> Result<AdjointProcesses<S>> {
    solve_adjoints_in(spec, reference, bundle, spec.adjoint_mode)
}

/// Solves both pairs in an explicit mode.
pub fn solve_adjoints_in<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
    mode: AdjointMode,
) -> Result<AdjointProcesses<S>> {
    let (first, d1) = solve_adjoint_first(spec, reference, bundle, mode)?;
    let (second, d2) = solve_adjoint_second(spec, reference, bundle, &first, mode)?;
    Ok(AdjointProcesses {
        scenario: reference.scenario,
        mode,
        p1: first.p1,
        q1: first.q1,
        p2: second.p2,
        q2: second.q2,
        diagnostics: AdjointDiagnostics {
            terminal_mismatch: d1.terminal_mismatch.max(d2.terminal_mismatch),
            ridged_nodes: d1.ridged_nodes + d2.ridged_nodes,
        },
    })
}

/// Sample fourth moment `E sup_k |P₁(t_k)|⁴` and the same for `P₂`.
pub fn adjoint_fourth_moments<S: Real>(adj: &AdjointProcesses<S>) -> (S, S) {
    let moment = |panel: &Panel<S>| {
        let mut acc = S::zero();
        for p in 0..panel.paths() {
            let mut worst = S::zero();
            for k in 0..panel.nodes() {
                let sq: S = panel.slot(p, k).iter().map(|&v| v * v).sum();
                worst = worst.max(sq * sq);
            }
            acc += worst;
        }
        acc / S::from_usize_lossy(panel.paths().max(1))
    };
    (moment(&adj.p1), moment(&adj.p2))
}
