//! The Hamiltonian `H = ⟨p, b⟩ + ⟨q, σ⟩ − f`, its derivatives and the
//! second-order operator `𝕊`.

use serde::Serialize;

use crate::adjoint::AdjointProcesses;
use crate::error::{Error, Result};
use crate::linalg::{Coords, Mat};
use crate::model::scenario::{CostJet, FieldJet, Scenario};
use crate::model::spec::{MalliavinMode, ProblemSpec};
use crate::scalar::{dot, Real};
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{scenario_of, StatePath};
use crate::simulate::panel::Panel;

/// Second derivatives of the Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianHessian<S> {
    /// m×m.
    pub uu: Mat<S>,
    /// m×n, entry `(a, j) = ∂²H/∂u_a∂x_j`.
    pub xu: Mat<S>,
    /// n×n.
    pub xx: Mat<S>,
}

/// Value and derivatives of `H` assembled from coefficient jets.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianJet<S> {
    pub value: S,
    pub du: Coords<S>,
    pub dx: Coords<S>,
    pub hess: HamiltonianHessian<S>,
}

impl<S: Real> HamiltonianJet<S> {
    pub fn from_jets(b: &FieldJet<S>, s: &FieldJet<S>, f: &CostJet<S>, p: &[S], q: &[S]) -> Self {
        let n = p.len();
        let m = f.du.len();
        let value = dot(p, &b.value) + dot(q, &s.value) - f.value;
        let mut du = b.du.transpose().mul_vec(p);
        for (d, (c, fu)) in du
            .iter_mut()
            .zip(s.du.transpose().mul_vec(q).into_iter().zip(&f.du))
        {
            *d += c - *fu;
        }
        let mut dx = b.dx.transpose().mul_vec(p);
        for (d, (c, fx)) in dx
            .iter_mut()
            .zip(s.dx.transpose().mul_vec(q).into_iter().zip(&f.dx))
        {
            *d += c - *fx;
        }
        let mut uu = f.duu.scale(-S::one());
        let mut xu = f.dxu.scale(-S::one());
        let mut xx = f.dxx.scale(-S::one());
        for i in 0..n {
            for a in 0..m {
                for c in 0..m {
                    uu[(a, c)] += p[i] * b.duu[i][(a, c)] + q[i] * s.duu[i][(a, c)];
                }
                for j in 0..n {
                    xu[(a, j)] += p[i] * b.dxu[i][(a, j)] + q[i] * s.dxu[i][(a, j)];
                }
            }
            for j in 0..n {
                for l in 0..n {
                    xx[(j, l)] += p[i] * b.dxx[i][(j, l)] + q[i] * s.dxx[i][(j, l)];
                }
            }
        }
        Self {
            value,
            du,
            dx,
            hess: HamiltonianHessian { uu, xu, xx },
        }
    }
}

pub fn hamiltonian_eval<S: Real>(sc: &Scenario<S>, t: S, x: &[S], u: &[S], p: &[S], q: &[S]) -> S {
    dot(p, &sc.drift(t, x, u)) + dot(q, &sc.diffusion(t, x, u)) - sc.running_cost(t, x, u)
}

fn jet_at<S: Real>(
    sc: &Scenario<S>,
    t: S,
    x: &[S],
    u: &[S],
    p: &[S],
    q: &[S],
) -> HamiltonianJet<S> {
    HamiltonianJet::from_jets(
        &sc.drift.jet(t, x, u),
        &sc.diffusion.jet(t, x, u),
        &sc.running_jet(t, x, u),
        p,
        q,
    )
}

/// `∂_u H = ∂_u bᵀp + ∂_u σᵀq − ∂_u f`.
pub fn hamiltonian_grad_u<S: Real>(
    sc: &Scenario<S>,
    t: S,
    x: &[S],
    u: &[S],
    p: &[S],
    q: &[S],
) -> Vec<S> {
    jet_at(sc, t, x, u, p, q).du.into_vec()
}

/// `∂_uu H`, `∂_xu H` and `∂_xx H`.
pub fn hamiltonian_hess<S: Real>(
    sc: &Scenario<S>,
    t: S,
    x: &[S],
    u: &[S],
    p: &[S],
    q: &[S],
) -> HamiltonianHessian<S> {
    jet_at(sc, t, x, u, p, q).hess
}

/// `𝕊 = ∂_xu H + ∂_u bᵀP₂ + ∂_u σᵀQ₂ + ∂_u σᵀP₂∂_x σ` (m×n).
pub fn s_operator<S: Real>(
    b: &FieldJet<S>,
    s: &FieldJet<S>,
    h_xu: &Mat<S>,
    p2: &Mat<S>,
    q2: &Mat<S>,
) -> Mat<S> {
    let but = b.du.transpose();
    let sut = s.du.transpose();
    let a = &but * p2;
    let c = &sut * q2;
    let d = &(&sut * p2) * &s.dx;
    &(&(h_xu + &a) + &c) + &d
}

/// `𝕊_γ(t_k)` along the reference and its Malliavin companion `∇𝕊_γ`,
/// both m×n row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SProcess<S> {
    pub scenario: usize,
    pub s: Panel<S>,
    /// Shared zero panel in declared-zero mode.
    pub nabla_s: Panel<S>,
}

fn moment_over<S: Real>(sp: &SProcess<S>, dt: S, paths: usize) -> S {
    let steps = sp.s.nodes().saturating_sub(1);
    let mut total = S::zero();
    for p in 0..paths {
        for k in 0..steps {
            total += sp.s.slot(p, k).iter().map(|&v| v * v).sum::<S>() * dt;
        }
    }
    total / S::from_usize_lossy(paths.max(1))
}

/// Time-integrated second moment `E∫|𝕊|²dt` (left-point sums).
pub fn s_second_moment<S: Real>(sp: &SProcess<S>, dt: S) -> S {
    moment_over(sp, dt, sp.s.paths())
}

/// Second moment on all paths against the first half of them.
pub fn s_moment_check<S: Real>(sp: &SProcess<S>, dt: S) -> MomentCheck {
    let full = moment_over(sp, dt, sp.s.paths()).as_f64();
    let half = moment_over(sp, dt, sp.s.paths().div_ceil(2)).as_f64();
    let relative_change = if full == half {
        0.0
    } else {
        (full - half).abs() / full.abs().max(half.abs())
    };
    MomentCheck {
        scenario: sp.scenario,
        moment: full,
        moment_half_paths: half,
        relative_change,
    }
}

/// Fills `𝕊` node by node along `(x̄, ū, P₁, Q₁, P₂, Q₂)`.
pub fn s_matrix<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    adjoint: &AdjointProcesses<S>,
    bundle: &PathBundle<S>,
) -> Result<SProcess<S>> {
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    let (n, m) = (spec.state_dim(), spec.control_dim());
    if adjoint.p2.width() != n * n || adjoint.q2.width() != n * n {
        return Err(Error::InvalidInput(format!(
            "P2/Q2 have width {}/{}, expected {} to pair with ∂_x σ",
            adjoint.p2.width(),
            adjoint.q2.width(),
            n * n
        )));
    }
    let grid = *bundle.grid();
    let s = Panel::par_build(bundle.n_paths(), grid.nodes(), m * n, |p, chunk| {
        for k in 0..grid.nodes() {
            let t = grid.node(k);
            let x = reference.x.at(p, k);
            let u = reference.u.at(p, k);
            let b = sc.drift.jet(t, x, u);
            let sj = sc.diffusion.jet(t, x, u);
            let f = sc.running_jet(t, x, u);
            let h =
                HamiltonianJet::from_jets(&b, &sj, &f, adjoint.p1.at(p, k), adjoint.q1.at(p, k));
            let op = s_operator(
                &b,
                &sj,
                &h.hess.xu,
                &adjoint.p2.mat_at(p, k, n),
                &adjoint.q2.mat_at(p, k, n),
            );
            chunk[k * m * n..(k + 1) * m * n].copy_from_slice(op.as_slice());
        }
        Ok(())
    })?;
    let nabla_s = match spec.malliavin_mode {
        MalliavinMode::DeclaredZero => Panel::zeros(1, grid.nodes(), m * n),
        MalliavinMode::ClosedForm => {
            let f = sc.nabla_s.as_ref().ok_or_else(|| {
                Error::MalliavinUnsupported(format!(
                    "scenario {scenario} has no closed form for ∇𝕊"
                ))
            })?;
            Panel::par_build(bundle.n_paths(), grid.nodes(), m * n, |p, chunk| {
                for k in 0..grid.nodes() {
                    let v = f(grid.node(k), reference.x.at(p, k));
                    if v.len() != m * n {
                        return Err(Error::InvalidInput(format!(
                            "∇𝕊 has length {}, expected {}",
                            v.len(),
                            m * n
                        )));
                    }
                    chunk[k * m * n..(k + 1) * m * n].copy_from_slice(&v);
                }
                Ok(())
            })?
        }
    };
    Ok(SProcess {
        scenario,
        s,
        nabla_s,
    })
}

/// Summary of the second-moment stability check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub scenario: usize,
    pub moment: f64,
    pub moment_half_paths: f64,
    pub relative_change: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::builtin_example;

    #[test]
    fn example_hamiltonian_values() {
        let spec = builtin_example::<f64>();
        let h1 = hamiltonian_eval(&spec.scenarios[0], 0.0, &[0.0], &[1.0], &[0.0], &[0.0]);
        assert_eq!(h1, -0.5);
        let h2 = hamiltonian_eval(&spec.scenarios[1], 0.0, &[0.0], &[1.0], &[0.0], &[0.0]);
        assert_eq!(h2, -0.25);
        let g = hamiltonian_grad_u(&spec.scenarios[0], 0.0, &[0.0], &[0.0], &[0.0], &[0.0]);
        assert_eq!(g, vec![0.0]);
        let hh = hamiltonian_hess(&spec.scenarios[0], 0.0, &[0.0], &[0.0], &[0.0], &[0.0]);
        assert_eq!(hh.uu[(0, 0)], -1.0);
        let hh2 = hamiltonian_hess(&spec.scenarios[1], 0.0, &[0.0], &[0.0], &[0.0], &[0.0]);
        assert_eq!(hh2.uu[(0, 0)], 0.0);
    }
}
