//! Itô duality between the variational processes and the adjoints.
//!
//! Both sides are estimated path by path on one bundle. On each step the
//! right-hand sides pair `P(t_{k+1})` with coefficients at `t_k`, which is
//! the quadrature under which the regression adjoints satisfy the identities
//! on the grid. In the second identity the `∂_u b v` term uses
//! `ỹ = (y₁(t_{k+1}) + A_k y₁(t_k))/2` with the Euler factor
//! `A_k = I + ∂_x b Δt + ∂_x σ ΔW_k`, and the `Q₂` term uses
//! `(I + ∂_x b Δt) y₁(t_k)`.

use serde::Serialize;

use crate::adjoint::solve::{solve_adjoints, AdjointProcesses};
use crate::error::Result;
use crate::hamiltonian::HamiltonianJet;
use crate::model::control::ControlProcess;
use crate::model::spec::ProblemSpec;
use crate::scalar::{dot, Real};
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{
    direction_trace, scenario_of, simulate_first_variation, simulate_state, StatePath,
};
use crate::simulate::panel::Panel;
use crate::stats::Estimate;

/// Both sides of a duality identity with their Monte Carlo errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub scenario: usize,
    pub lhs: Estimate<f64>,
    pub rhs: Estimate<f64>,
    /// `lhs − rhs`.
    pub residual: f64,
    /// `sqrt(se_lhs² + se_rhs²)`.
    pub combined_stderr: f64,
    /// Standard error of the per-path difference.
    pub paired_stderr: f64,
    /// Magnitude used for the rounding allowance.
    pub scale: f64,
}

impl DualityReport {
    fn from_samples<S: Real>(scenario: usize, lhs: &[S], rhs: &[S]) -> Self {
        let l = Estimate::from_samples(lhs);
        let r = Estimate::from_samples(rhs);
        let diff: Vec<S> = lhs.iter().zip(rhs).map(|(&a, &b)| a - b).collect();
        let d = Estimate::from_samples(&diff);
        let scale = lhs
            .iter()
            .chain(rhs)
            .fold(S::zero(), |acc, &v| acc.max(v.abs()));
        Self {
            scenario,
            lhs: Estimate {
                mean: l.mean.as_f64(),
                stderr: l.stderr.as_f64(),
            },
            rhs: Estimate {
                mean: r.mean.as_f64(),
                stderr: r.stderr.as_f64(),
            },
            residual: (l.mean - r.mean).as_f64(),
            combined_stderr: l.combined_stderr(&r).as_f64(),
            paired_stderr: d.stderr.as_f64(),
            scale: scale.as_f64(),
        }
    }

    /// `|residual| ≤ k·combined_stderr` up to a rounding allowance of
    /// `64·ε_f64·scale`.
    pub fn within(&self, k: f64) -> bool {
        self.residual.abs() <= k * self.combined_stderr + 64.0 * f64::EPSILON * self.scale.max(1.0)
    }

    /// Residual in combined standard errors (0 when both are exact and equal).
    pub fn z_score(&self) -> f64 {
        if self.combined_stderr > 0.0 {
            self.residual.abs() / self.combined_stderr
        } else if self.residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Which identities a pass over the panels estimates.
#[derive(Clone, Copy)]
struct Wanted {
    first: bool,
    second: bool,
}

/// Per-path samples of both sides of the wanted identities, sharing the
/// coefficient jets between them.
#[allow(clippy::type_complexity)]
fn samples<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    adjoint: &AdjointProcesses<S>,
    v: &Panel<S>,
    y1: &Panel<S>,
    bundle: &PathBundle<S>,
    wanted: Wanted,
) -> Result<[Vec<S>; 4]> {
    let sc = scenario_of(spec, reference.scenario)?;
    let grid = *bundle.grid();
    let dt = grid.dt();
    let last = grid.steps;
    let n = spec.state_dim();
    let paths = bundle.n_paths();
    let two = S::lit(2.0);
    let half = S::lit(0.5);
    let rhs = Panel::par_build(paths, 1, 2, |p, out| {
        let (mut acc1, mut acc2) = (S::zero(), S::zero());
        for k in 0..last {
            let t = grid.node(k);
            let x = reference.x.at(p, k);
            let u = reference.u.at(p, k);
            let b = sc.drift.jet(t, x, u);
            let s = sc.diffusion.jet(t, x, u);
            let f = sc.running_jet(t, x, u);
            let vk = v.at(p, k);
            let y0 = y1.at(p, k);
            let bu_v = b.du.mul_vec(vk);
            let su_v = s.du.mul_vec(vk);
            if wanted.first {
                acc1 += (dot(adjoint.p1.at(p, k + 1), &bu_v)
                    + dot(adjoint.q1.at(p, k), &su_v)
                    + dot(&f.dx, y0))
                    * dt;
            }
            if wanted.second {
                let h =
                    HamiltonianJet::from_jets(&b, &s, &f, adjoint.p1.at(p, k), adjoint.q1.at(p, k));
                let p2 = adjoint.p2.mat_at(p, k + 1, n);
                let q2 = adjoint.q2.mat_at(p, k, n);
                let y1n = y1.at(p, k + 1);
                let bx_y = b.dx.mul_vec(y0);
                let sx_y = s.dx.mul_vec(y0);
                let dw = bundle.increment(p, k);
                let drifted: Vec<S> = (0..n).map(|i| y0[i] + bx_y[i] * dt).collect();
                let ytilde: Vec<S> = (0..n)
                    .map(|i| (y1n[i] + drifted[i] + sx_y[i] * dw) * half)
                    .collect();
                let p2_su_v = p2.mul_vec(&su_v);
                let term = two * dot(&p2.mul_vec(&ytilde), &bu_v)
                    + two * dot(&q2.mul_vec(&su_v), &drifted)
                    + dot(&p2_su_v, &su_v)
                    - h.hess.xx.bilinear(y0, y0)
                    + two * dot(&p2_su_v, &sx_y);
                acc2 += term * dt;
            }
        }
        out[0] = -acc1;
        out[1] = -acc2;
        Ok(())
    })?;
    let mut lhs1 = vec![S::zero(); paths];
    let mut lhs2 = vec![S::zero(); paths];
    for p in 0..paths {
        let jet = sc.terminal_jet(reference.x.at(p, last));
        let y = y1.at(p, last);
        lhs1[p] = dot(&jet.dx, y);
        lhs2[p] = jet.dxx.bilinear(y, y);
    }
    let rhs1 = (0..paths).map(|p| rhs.slot(p, 0)[0]).collect();
    let rhs2 = (0..paths).map(|p| rhs.slot(p, 0)[1]).collect();
    Ok([lhs1, rhs1, lhs2, rhs2])
}

/// `E⟨∂_x h(x̄(T)), y₁(T)⟩ = −E∫[⟨P₁, ∂_u b v⟩ + ⟨Q₁, ∂_u σ v⟩ + ⟨∂_x f, y₁⟩]dt`
/// on precomputed panels.
pub fn duality_first<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    adjoint: &AdjointProcesses<S>,
    v: &Panel<S>,
    y1: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<DualityReport> {
    let wanted = Wanted {
        first: true,
        second: false,
    };
    let [lhs, rhs, ..] = samples(spec, reference, adjoint, v, y1, bundle, wanted)?;
    Ok(DualityReport::from_samples(reference.scenario, &lhs, &rhs))
}

/// Second identity on precomputed panels:
///
/// ```text
/// E⟨∂_xx h y₁(T), y₁(T)⟩ = −E∫[2⟨P₂y₁, ∂_u b v⟩ + 2⟨Q₂∂_u σ v, y₁⟩
///     + ⟨P₂∂_u σ v, ∂_u σ v⟩ − ⟨∂_xx H y₁, y₁⟩ + 2⟨P₂∂_x σ y₁, ∂_u σ v⟩]dt
/// ```
pub fn duality_second<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    adjoint: &AdjointProcesses<S>,
    v: &Panel<S>,
    y1: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<DualityReport> {
    let wanted = Wanted {
        first: false,
        second: true,
    };
    let [_, _, lhs, rhs] = samples(spec, reference, adjoint, v, y1, bundle, wanted)?;
    Ok(DualityReport::from_samples(reference.scenario, &lhs, &rhs))
}

/// Both identities in one pass over the panels.
pub fn duality_both<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    adjoint: &AdjointProcesses<S>,
    v: &Panel<S>,
    y1: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<(DualityReport, DualityReport)> {
    let wanted = Wanted {
        first: true,
        second: true,
    };
    let [l1, r1, l2, r2] = samples(spec, reference, adjoint, v, y1, bundle, wanted)?;
    let g = reference.scenario;
    Ok((
        DualityReport::from_samples(g, &l1, &r1),
        DualityReport::from_samples(g, &l2, &r2),
    ))
}

struct Prepared<S: Real> {
    reference: StatePath<S>,
    adjoint: AdjointProcesses<S>,
    v: Panel<S>,
    y1: Panel<S>,
}

fn prepare<S: Real>(
    spec: &ProblemSpec<S>,
    control_bar: &ControlProcess<S>,
    direction: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<Prepared<S>> {
    let reference = simulate_state(spec, control_bar, scenario, bundle)?;
    let adjoint = solve_adjoints(spec, &reference, bundle)?;
    let v = direction_trace(spec, &reference, direction, bundle)?;
    let y1 = simulate_first_variation(spec, &reference, &v, bundle)?;
    Ok(Prepared {
        reference,
        adjoint,
        v,
        y1,
    })
}

/// First duality identity for direction `v` at `ū` in scenario γ, with the
/// adjoints solved in `spec.adjoint_mode`.
pub fn duality_check_first<S: Real>(
    spec: &ProblemSpec<S>,
    control_bar: &ControlProcess<S>,
    direction: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<DualityReport> {
    let w = prepare(spec, control_bar, direction, scenario, bundle)?;
    duality_first(spec, &w.reference, &w.adjoint, &w.v, &w.y1, bundle)
}

/// Second duality identity for direction `v` at `ū` in scenario γ.
pub fn duality_check_second<S: Real>(
    spec: &ProblemSpec<S>,
    control_bar: &ControlProcess<S>,
    direction: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<DualityReport> {
    let w = prepare(spec, control_bar, direction, scenario, bundle)?;
    duality_second(spec, &w.reference, &w.adjoint, &w.v, &w.y1, bundle)
}

/// Both identities from one adjoint solve.
pub fn duality_check<S: Real>(
    spec: &ProblemSpec<S>,
    control_bar: &ControlProcess<S>,
    direction: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<(DualityReport, DualityReport)> {
    let w = prepare(spec, control_bar, direction, scenario, bundle)?;
    duality_both(spec, &w.reference, &w.adjoint, &w.v, &w.y1, bundle)
}
