//! Window averages `(1/α²)E∫_τ^{τ+α}⟨Φ(·),∫_τ^t Ψ(s)ds⟩dt` and their limit
//! `½E⟨Φ(τ),Ψ(τ)⟩` as `α → 0`.
//!
//! `Φ` and `Ψ` are the linear interpolants of their nodal panels, so the
//! integrand on each grid subinterval is a polynomial of degree at most
//! three and Simpson's rule integrates it exactly.

use serde::Serialize;

use crate::analysis::Analysis;
use crate::error::{Error, Result};
use crate::model::grid::TimeGrid;
use crate::scalar::{dot, Real};
use crate::simulate::forward::scenario_of;
use crate::simulate::panel::Panel;
use crate::stats::{is_decreasing_geometric, Estimate};

/// One weighted pair `(Φ, Ψ)`, typically one scenario scaled by `λ_γ`.
#[derive(Clone, Copy, Debug)]
pub struct WindowTerm<'a, S> {
    pub weight: S,
    pub phi: &'a Panel<S>,
    pub psi: &'a Panel<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRow<S> {
    pub alpha: S,
    /// With `Φ(τ)` frozen.
    pub fixed: Estimate<S>,
    /// With `Φ(t)` moving.
    pub moving: Estimate<S>,
    pub fixed_gap: Estimate<S>,
    pub moving_gap: Estimate<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowReport<S> {
    pub tau: S,
    /// `½E⟨Φ(τ),Ψ(τ)⟩`.
    pub target: Estimate<S>,
    pub rows: Vec<WindowRow<S>>,
    /// Larger absolute gap of the two variants at the smallest `α`.
    pub final_gap: S,
    /// Both gaps are nonincreasing as `α` decreases.
    pub monotone: bool,
}

/// Nodal values of one path and their linear interpolant.
struct Interp<'a, S> {
    panel: &'a Panel<S>,
    path: usize,
    grid: &'a TimeGrid<S>,
}

impl<S: Real> Interp<'_, S> {
    fn at(&self, t: S, out: &mut [S]) {
        let k = self
            .grid
            .node_at_or_before(t)
            .min(self.grid.steps.saturating_sub(1));
        let left = self.panel.at(self.path, k);
        if self.grid.steps == 0 {
            out.copy_from_slice(left);
            return;
        }
        let right = self.panel.at(self.path, k + 1);
        let w = ((t - self.grid.node(k)) / self.grid.dt())
            .max(S::zero())
            .min(S::one());
        for (o, (&a, &b)) in out.iter_mut().zip(left.iter().zip(right)) {
            *o = a + w * (b - a);
        }
    }
}

/// Both window integrals of one path over `[τ, τ + α]`.
fn path_window<S: Real>(
    phi: &Interp<'_, S>,
    psi: &Interp<'_, S>,
    tau: S,
    alpha: S,
    width: usize,
) -> (S, S) {
    let end = tau + alpha;
    let mut breaks = vec![tau];
    let mut k = phi.grid.node_at_or_before(tau) + 1;
    while k <= phi.grid.steps && phi.grid.node(k) < end {
        if phi.grid.node(k) > tau {
            breaks.push(phi.grid.node(k));
        }
        k += 1;
    }
    breaks.push(end);
    let half = S::lit(0.5);
    let mut phi_tau = vec![S::zero(); width];
    phi.at(tau, &mut phi_tau);
    let (mut fa, mut fm, mut fb) = (
        vec![S::zero(); width],
        vec![S::zero(); width],
        vec![S::zero(); width],
    );
    let (mut pa, mut pm, mut pb) = (
        vec![S::zero(); width],
        vec![S::zero(); width],
        vec![S::zero(); width],
    );
    let mut acc = vec![S::zero(); width];
    let (mut fixed, mut moving) = (S::zero(), S::zero());
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let m = half * (a + b);
        phi.at(a, &mut fa);
        phi.at(m, &mut fm);
        phi.at(b, &mut fb);
        psi.at(a, &mut pa);
        psi.at(m, &mut pm);
        psi.at(b, &mut pb);
        let ia = acc.clone();
        let im: Vec<S> = (0..width)
            .map(|i| ia[i] + (m - a) * half * (pa[i] + pm[i]))
            .collect();
        let ib: Vec<S> = (0..width)
            .map(|i| ia[i] + (b - a) * half * (pa[i] + pb[i]))
            .collect();
        let h6 = (b - a) / S::lit(6.0);
        fixed += h6 * (dot(&phi_tau, &ia) + S::lit(4.0) * dot(&phi_tau, &im) + dot(&phi_tau, &ib));
        moving += h6 * (dot(&fa, &ia) + S::lit(4.0) * dot(&fm, &im) + dot(&fb, &ib));
        acc = ib;
    }
    let scale = S::one() / (alpha * alpha);
    (fixed * scale, moving * scale)
}

fn nonincreasing<S: Real>(gaps: impl Iterator<Item = S>) -> bool {
    let gaps: Vec<S> = gaps.collect();
    let slack = S::lit(1e-12) * (S::one() + gaps.iter().fold(S::zero(), |m, g| m.max(*g)));
    gaps.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Scans the window averages over `alphas`, a decreasing geometric sequence
/// with `τ + alphas[0] ≤ T`.
///
/// # Errors
/// [`Error::InvalidInput`] on a window past the horizon, a malformed `alphas`
/// or panels that do not match `grid`.
pub fn lebesgue_window_scan<S: Real>(
    terms: &[WindowTerm<'_, S>],
    grid: &TimeGrid<S>,
    tau: S,
    alphas: &[S],
) -> Result<WindowReport<S>> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidInput("window scan needs at least one term".into()))?;
    let (paths, width) = (first.phi.paths(), first.phi.width());
    for t in terms {
        for panel in [t.phi, t.psi] {
            if panel.nodes() != grid.nodes() || panel.width() != width || panel.paths() != paths {
                return Err(Error::InvalidInput(
                    "window panels must share paths, grid and width".into(),
                ));
            }
        }
    }
    if alphas.is_empty() || !(alphas[0] > S::zero()) {
        return Err(Error::InvalidInput(
            "alphas must be nonempty and positive".into(),
        ));
    }
    let scaled: Vec<S> = alphas
        .iter()
        .map(|&a| a * S::lit(0.5) / alphas[0])
        .collect();
    if !is_decreasing_geometric(&scaled) {
        return Err(Error::InvalidInput(
            "alphas must form a decreasing geometric sequence".into(),
        ));
    }
    if !(tau >= S::zero()) || tau + alphas[0] > grid.horizon * (S::one() + S::lit(1e-12)) {
        return Err(Error::InvalidInput(format!(
            "window [{tau}, {}] exceeds the horizon {}",
            tau + alphas[0],
            grid.horizon
        )));
    }
    let mut buf_phi = vec![S::zero(); width];
    let mut buf_psi = vec![S::zero(); width];
    let interp = |panel, path| Interp { panel, path, grid };
    let target_samples: Vec<S> = (0..paths)
        .map(|p| {
            terms.iter().fold(S::zero(), |acc, t| {
                interp(t.phi, p).at(tau, &mut buf_phi);
                interp(t.psi, p).at(tau, &mut buf_psi);
                acc + t.weight * S::lit(0.5) * dot(&buf_phi, &buf_psi)
            })
        })
        .collect();
    let target = Estimate::from_samples(&target_samples);
    let rows: Vec<WindowRow<S>> = alphas
        .iter()
        .map(|&alpha| {
            let mut fixed = Vec::with_capacity(paths);
            let mut moving = Vec::with_capacity(paths);
            for p in 0..paths {
                let (f, m) = terms.iter().fold((S::zero(), S::zero()), |acc, t| {
                    let (f, m) =
                        path_window(&interp(t.phi, p), &interp(t.psi, p), tau, alpha, width);
                    (acc.0 + t.weight * f, acc.1 + t.weight * m)
                });
                fixed.push(f);
                moving.push(m);
            }
            let gap = |vals: &[S]| {
                let diffs: Vec<S> = vals
                    .iter()
                    .zip(&target_samples)
                    .map(|(&v, &t)| v - t)
                    .collect();
                let e = Estimate::from_samples(&diffs);
                Estimate {
                    mean: e.mean.abs(),
                    stderr: e.stderr,
                }
            };
            WindowRow {
                alpha,
                fixed_gap: gap(&fixed),
                moving_gap: gap(&moving),
                fixed: Estimate::from_samples(&fixed),
                moving: Estimate::from_samples(&moving),
            }
        })
        .collect();
    let last = rows.last().expect("alphas is nonempty");
    let final_gap = last.fixed_gap.mean.max(last.moving_gap.mean);
    let monotone = nonincreasing(rows.iter().map(|r| r.fixed_gap.mean))
        && nonincreasing(rows.iter().map(|r| r.moving_gap.mean));
    Ok(WindowReport {
        tau,
        target,
        rows,
        final_gap,
        monotone,
    })
}

/// `Φ = 𝕊ᵀ(v − ū)` and `Ψ = ∂_u b (v − ū)` along `x̄_γ` for a constant
/// `v ∈ U`.
pub fn window_integrands<S: Real>(
    analysis: &Analysis<'_, S>,
    scenario: usize,
    v: &[S],
) -> Result<(Panel<S>, Panel<S>)> {
    let spec = analysis.spec;
    let (n, m) = (spec.state_dim(), spec.control_dim());
    if v.len() != m || !spec.control_box.contains(v) {
        return Err(Error::InvalidInput(format!("control {v:?} is not in U")));
    }
    let sc = scenario_of(spec, scenario)?;
    let data = &analysis.scenarios[scenario];
    let grid = *analysis.bundle.grid();
    let paths = analysis.bundle.n_paths();
    let fill = |want_phi: bool| {
        Panel::par_build(paths, grid.nodes(), n, |p, chunk| {
            for k in 0..grid.nodes() {
                let (x, ubar) = (data.reference.x.at(p, k), data.reference.u.at(p, k));
                let d: Vec<S> = v.iter().zip(ubar).map(|(&a, &b)| a - b).collect();
                let out = if want_phi {
                    data.s.s.mat_at(p, k, m).transpose().mul_vec(&d)
                } else {
                    sc.drift.jet(grid.node(k), x, ubar).du.mul_vec(&d)
                };
                chunk[k * n..(k + 1) * n].copy_from_slice(&out);
            }
            Ok(())
        })
    };
    Ok((fill(true)?, fill(false)?))
}
