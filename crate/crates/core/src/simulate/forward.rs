//! Euler–Maruyama integration of the state, the fundamental matrix and the
//! first and second variational processes.
//!
//! All routines use the grid carried by the [`PathBundle`]. Variational
//! processes freeze their coefficients along a reference [`StatePath`], so
//! their Euler recursions are the exact `ε`-derivatives of the Euler map of
//! the state.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::control::ControlProcess;
use crate::model::scenario::{FieldJet, Scenario};
use crate::model::spec::ProblemSpec;
use crate::scalar::Real;
use crate::simulate::bundle::PathBundle;
use crate::simulate::panel::Panel;

/// A simulated state together with the control trace that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePath<S> {
    pub scenario: usize,
    /// `x(t_k)` for `k = 0..=N`, width n.
    pub x: Panel<S>,
    /// `u(t_k)` for `k = 0..=N`, width m; a single shared path for
    /// deterministic controls.
    pub u: Panel<S>,
}

/// `Φ(t_k)` and `Φ(t_k)⁻¹`, row-major n×n.
#[derive(Clone, Debug, PartialEq)]
pub struct Fundamental<S> {
    pub phi: Panel<S>,
    pub phi_inv: Panel<S>,
}

/// Per-path outputs of one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardProcesses<S> {
    pub state: StatePath<S>,
    pub fundamental: Option<Fundamental<S>>,
    pub y1: Option<Panel<S>>,
    pub y2: Option<Panel<S>>,
}

pub(crate) fn scenario_of<S: Real>(spec: &ProblemSpec<S>, scenario: usize) -> Result<&Scenario<S>> {
    spec.scenarios
        .get(scenario)
        .ok_or_else(|| Error::InvalidInput(format!("scenario {scenario} does not exist")))
}

fn check_bundle<S: Real>(spec: &ProblemSpec<S>, bundle: &PathBundle<S>) -> Result<()> {
    let (a, b) = (spec.grid.horizon, bundle.grid().horizon);
    if (a - b).abs() > S::epsilon() * S::lit(16.0) * a.abs().max(S::one()) {
        return Err(Error::InvalidInput(format!(
            "bundle horizon {b} differs from the problem horizon {a}"
        )));
    }
    Ok(())
}

fn check_trace<S: Real>(
    trace: &Panel<S>,
    bundle: &PathBundle<S>,
    m: usize,
    what: &str,
) -> Result<()> {
    let nodes = bundle.grid().nodes();
    if trace.width() != m
        || trace.nodes() != nodes
        || !(trace.paths() == 1 || trace.paths() == bundle.n_paths())
    {
        return Err(Error::InvalidInput(format!(
            "{what} trace has shape ({}, {}, {}), expected (1 or {}, {nodes}, {m})",
            trace.paths(),
            trace.nodes(),
            trace.width(),
            bundle.n_paths()
        )));
    }
    Ok(())
}

fn check_finite<S: Real>(
    v: &[S],
    quantity: &'static str,
    scenario: usize,
    path: usize,
    step: usize,
) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            quantity,
            scenario,
            path,
            step,
        })
    }
}

/// Evaluates an open-loop control on the bundle grid as a shared trace.
fn deterministic_trace<S: Real>(
    spec: &ProblemSpec<S>,
    control: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let grid = bundle.grid();
    let m = spec.control_dim();
    let mut trace = Panel::zeros(1, grid.nodes(), m);
    for k in 0..grid.nodes() {
        let u = control.eval(grid, k, &spec.x0, &[]);
        if u.len() != m {
            return Err(Error::InvalidInput(format!(
                "control has {} components, expected {m}",
                u.len()
            )));
        }
        if !spec.control_box.contains(&u) {
            return Err(Error::ControlOutsideBox {
                scenario,
                path: 0,
                step: k,
            });
        }
        trace.slot_mut(0, k).copy_from_slice(&u);
    }
    Ok(trace)
}

/// Euler–Maruyama `x_{k+1} = x_k + b Δt + σ ΔW_k` under `control`.
pub fn simulate_state<S: Real>(
    spec: &ProblemSpec<S>,
    control: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<StatePath<S>> {
    check_bundle(spec, bundle)?;
    if control.is_deterministic() {
        let u = deterministic_trace(spec, control, scenario, bundle)?;
        let x = simulate_state_trace(spec, &u, scenario, bundle)?;
        return Ok(StatePath { scenario, x, u });
    }
    let sc = scenario_of(spec, scenario)?;
    let grid = *bundle.grid();
    let (n, m) = (spec.state_dim(), spec.control_dim());
    let nodes = grid.nodes();
    let dt = grid.dt();
    // x and u are interleaved per node while building, then split.
    let joint = Panel::par_build(bundle.n_paths(), nodes, n + m, |p, chunk| {
        let dw = bundle.path(p);
        let mut x = spec.x0.clone();
        for k in 0..nodes {
            let u = control.eval(&grid, k, &x, &dw[..k]);
            if u.len() != m {
                return Err(Error::InvalidInput(format!(
                    "control has {} components, expected {m}",
                    u.len()
                )));
            }
            if !spec.control_box.contains(&u) {
                return Err(Error::ControlOutsideBox {
                    scenario,
                    path: p,
                    step: k,
                });
            }
            let slot = &mut chunk[k * (n + m)..(k + 1) * (n + m)];
            slot[..n].copy_from_slice(&x);
            slot[n..].copy_from_slice(&u);
            if k + 1 < nodes {
                let t = grid.node(k);
                let b = sc.drift(t, &x, &u);
                let s = sc.diffusion(t, &x, &u);
                for i in 0..n {
                    x[i] += b[i] * dt + s[i] * dw[k];
                }
                check_finite(&x, "state", scenario, p, k + 1)?;
            }
        }
        Ok(())
    })?;
    let x = Panel::par_build(bundle.n_paths(), nodes, n, |p, c| {
        for k in 0..nodes {
            c[k * n..(k + 1) * n].copy_from_slice(&joint.slot(p, k)[..n]);
        }
        Ok(())
    })?;
    let u = Panel::par_build(bundle.n_paths(), nodes, m, |p, c| {
        for k in 0..nodes {
            c[k * m..(k + 1) * m].copy_from_slice(&joint.slot(p, k)[n..]);
        }
        Ok(())
    })?;
    Ok(StatePath { scenario, x, u })
}

/// Euler–Maruyama state driven open-loop by a control trace.
pub fn simulate_state_trace<S: Real>(
    spec: &ProblemSpec<S>,
    trace: &Panel<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    check_bundle(spec, bundle)?;
    let sc = scenario_of(spec, scenario)?;
    let grid = *bundle.grid();
    let n = spec.state_dim();
    check_trace(trace, bundle, spec.control_dim(), "control")?;
    let dt = grid.dt();
    Panel::par_build(bundle.n_paths(), grid.nodes(), n, |p, chunk| {
        let dw = bundle.path(p);
        chunk[..n].copy_from_slice(&spec.x0);
        for k in 0..grid.steps {
            let u = trace.at(p, k);
            if !spec.control_box.contains(u) {
                return Err(Error::ControlOutsideBox {
                    scenario,
                    path: p,
                    step: k,
                });
            }
            let (head, tail) = chunk.split_at_mut((k + 1) * n);
            let x = &head[k * n..];
            let t = grid.node(k);
            let b = sc.drift(t, x, u);
            let s = sc.diffusion(t, x, u);
            let next = &mut tail[..n];
            for i in 0..n {
                next[i] = x[i] + b[i] * dt + s[i] * dw[k];
            }
            check_finite(next, "state", scenario, p, k + 1)?;
        }
        Ok(())
    })
}

/// Jets of drift and diffusion along the reference at node `k` of path `p`.
pub(crate) fn reference_jets<S: Real>(
    sc: &Scenario<S>,
    reference: &StatePath<S>,
    t: S,
    p: usize,
    k: usize,
) -> (FieldJet<S>, FieldJet<S>) {
    let x = reference.x.at(p, k);
    let u = reference.u.at(p, k);
    (sc.drift.jet(t, x, u), sc.diffusion.jet(t, x, u))
}

/// `Φ_{k+1} = Φ_k + ∂_x b Φ_k Δt + ∂_x σ Φ_k ΔW_k`, `Φ_0 = I`, plus the
/// inverse at every node by direct Gauss–Jordan elimination.
pub fn simulate_fundamental<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    bundle: &PathBundle<S>,
) -> Result<Fundamental<S>> {
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    let grid = *bundle.grid();
    let n = spec.state_dim();
    let dt = grid.dt();
    let det_floor = S::lit(1e-12);
    let phi = Panel::par_build(bundle.n_paths(), grid.nodes(), n * n, |p, chunk| {
        let dw = bundle.path(p);
        let mut cur = Mat::identity(n);
        chunk[..n * n].copy_from_slice(cur.as_slice());
        for k in 0..grid.steps {
            let (b, s) = reference_jets(sc, reference, grid.node(k), p, k);
            let drift = &b.dx * &cur;
            let noise = &s.dx * &cur;
            cur = &(&cur + &drift.scale(dt)) + &noise.scale(dw[k]);
            check_finite(cur.as_slice(), "fundamental matrix", scenario, p, k + 1)?;
            chunk[(k + 1) * n * n..(k + 2) * n * n].copy_from_slice(cur.as_slice());
        }
        Ok(())
    })?;
    let phi_inv = Panel::par_build(bundle.n_paths(), grid.nodes(), n * n, |p, chunk| {
        for k in 0..grid.nodes() {
            let m = phi.mat_at(p, k, n);
            match m.inverse_with_det() {
                Some((inv, det)) if det.abs() >= det_floor => {
                    chunk[k * n * n..(k + 1) * n * n].copy_from_slice(inv.as_slice());
                }
                other => {
                    return Err(Error::DegenerateFundamental {
                        scenario,
                        path: p,
                        step: k,
                        det: other.map_or(0.0, |(_, d)| d.as_f64()),
                    })
                }
            }
        }
        Ok(())
    })?;
    Ok(Fundamental { phi, phi_inv })
}

/// First variation `dy₁ = [∂_x b y₁ + ∂_u b v]dt + [∂_x σ y₁ + ∂_u σ v]dW`,
/// `y₁(0) = 0`, along the reference.
pub fn simulate_first_variation<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    v: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    check_trace(v, bundle, spec.control_dim(), "perturbation")?;
    let grid = *bundle.grid();
    let n = spec.state_dim();
    let dt = grid.dt();
    Panel::par_build(bundle.n_paths(), grid.nodes(), n, |p, chunk| {
        let dw = bundle.path(p);
        for k in 0..grid.steps {
            let (b, s) = reference_jets(sc, reference, grid.node(k), p, k);
            let vk = v.at(p, k);
            let (head, tail) = chunk.split_at_mut((k + 1) * n);
            let y = &head[k * n..];
            let db = b.dx.mul_vec(y);
            let dbu = b.du.mul_vec(vk);
            let ds = s.dx.mul_vec(y);
            let dsu = s.du.mul_vec(vk);
            let next = &mut tail[..n];
            for i in 0..n {
                next[i] = y[i] + (db[i] + dbu[i]) * dt + (ds[i] + dsu[i]) * dw[k];
            }
            check_finite(next, "first variation", scenario, p, k + 1)?;
        }
        Ok(())
    })
}

/// `y₁(t) = Φ(t)[∫Φ⁻¹(∂_u b − ∂_x σ ∂_u σ)v ds + ∫Φ⁻¹ ∂_u σ v dW]` with
/// left-point sums on the bundle increments.
pub fn y1_via_representation<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    v: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let fundamental = simulate_fundamental(spec, reference, bundle)?;
    y1_from_fundamental(spec, reference, &fundamental, v, bundle)
}

/// As [`y1_via_representation`] with a precomputed fundamental matrix.
pub fn y1_from_fundamental<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    fundamental: &Fundamental<S>,
    v: &Panel<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    check_trace(v, bundle, spec.control_dim(), "perturbation")?;
    let grid = *bundle.grid();
    let n = spec.state_dim();
    let dt = grid.dt();
    Panel::par_build(bundle.n_paths(), grid.nodes(), n, |p, chunk| {
        let dw = bundle.path(p);
        let mut acc = vec![S::zero(); n];
        for k in 0..grid.steps {
            let (b, s) = reference_jets(sc, reference, grid.node(k), p, k);
            let vk = v.at(p, k);
            let su = s.du.mul_vec(vk);
            let corr = s.dx.mul_vec(&su);
            let bu = b.du.mul_vec(vk);
            let integrand: Vec<S> = (0..n)
                .map(|i| (bu[i] - corr[i]) * dt + su[i] * dw[k])
                .collect();
            let inv = fundamental.phi_inv.mat_at(p, k, n);
            for (a, d) in acc.iter_mut().zip(inv.mul_vec(&integrand)) {
                *a += d;
            }
            let y = fundamental.phi.mat_at(p, k + 1, n).mul_vec(&acc);
            check_finite(&y, "first variation", scenario, p, k + 1)?;
            chunk[(k + 1) * n..(k + 2) * n].copy_from_slice(&y);
        }
        Ok(())
    })
}

/// Source term `y₁ᵀ D_xx y₁ + 2 vᵀ D_xu y₁ + vᵀ D_uu v` of the second
/// variation for one coefficient jet.
pub(crate) fn second_order_source<S: Real>(jet: &FieldJet<S>, y1: &[S], v: &[S]) -> Vec<S> {
    let two = S::lit(2.0);
    (0..jet.value.len())
        .map(|i| {
            jet.dxx[i].bilinear(y1, y1)
                + two * jet.dxu[i].bilinear(v, y1)
                + jet.duu[i].bilinear(v, v)
        })
        .collect()
}

/// Second variation with drift `∂_x b y₂ + y₁ᵀ∂_xx b y₁ + 2vᵀ∂_xu b y₁ + vᵀ∂_uu b v`
/// and the analogous diffusion, `y₂(0) = 0`.
pub fn simulate_second_variation<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    v: &Panel<S>,
    bundle: &PathBundle<S>,
    y1: &Panel<S>,
) -> Result<Panel<S>> {
    let scenario = reference.scenario;
    let sc = scenario_of(spec, scenario)?;
    check_trace(v, bundle, spec.control_dim(), "perturbation")?;
    let grid = *bundle.grid();
    let n = spec.state_dim();
    let dt = grid.dt();
    Panel::par_build(bundle.n_paths(), grid.nodes(), n, |p, chunk| {
        let dw = bundle.path(p);
        for k in 0..grid.steps {
            let (b, s) = reference_jets(sc, reference, grid.node(k), p, k);
            let vk = v.at(p, k);
            let y1k = y1.at(p, k);
            let (head, tail) = chunk.split_at_mut((k + 1) * n);
            let y = &head[k * n..];
            let db = b.dx.mul_vec(y);
            let ds = s.dx.mul_vec(y);
            let sb = second_order_source(&b, y1k, vk);
            let ss = second_order_source(&s, y1k, vk);
            let next = &mut tail[..n];
            for i in 0..n {
                next[i] = y[i] + (db[i] + sb[i]) * dt + (ds[i] + ss[i]) * dw[k];
            }
            check_finite(next, "second variation", scenario, p, k + 1)?;
        }
        Ok(())
    })
}

/// `u(t_k) − ū(t_k)` with `u` evaluated along the reference state.
pub fn perturbation_trace<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    control: &ControlProcess<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let m = spec.control_dim();
    let grid = *bundle.grid();
    let u = if control.is_deterministic() {
        deterministic_trace(spec, control, reference.scenario, bundle)?
    } else {
        Panel::par_build(bundle.n_paths(), grid.nodes(), m, |p, chunk| {
            let dw = bundle.path(p);
            for k in 0..grid.nodes() {
                let val = control.eval(&grid, k, reference.x.at(p, k), &dw[..k.min(grid.steps)]);
                if !spec.control_box.contains(&val) {
                    return Err(Error::ControlOutsideBox {
                        scenario: reference.scenario,
                        path: p,
                        step: k,
                    });
                }
                chunk[k * m..(k + 1) * m].copy_from_slice(&val);
            }
            Ok(())
        })?
    };
    let minus_one = -S::one();
    Ok(u.axpy(minus_one, &reference.u))
}

/// `ū + εv`.
pub fn shifted_trace<S: Real>(reference: &Panel<S>, v: &Panel<S>, eps: S) -> Panel<S> {
    reference.axpy(eps, v)
}

/// A direction `v` given as a process, evaluated along the reference state
/// without the box constraint. Deterministic directions give a shared trace.
pub fn direction_trace<S: Real>(
    spec: &ProblemSpec<S>,
    reference: &StatePath<S>,
    direction: &ControlProcess<S>,
    bundle: &PathBundle<S>,
) -> Result<Panel<S>> {
    let m = spec.control_dim();
    let grid = *bundle.grid();
    let paths = if direction.is_deterministic() {
        1
    } else {
        bundle.n_paths()
    };
    Panel::par_build(paths, grid.nodes(), m, |p, chunk| {
        let dw = bundle.path(p);
        for k in 0..grid.nodes() {
            let val = direction.eval(&grid, k, reference.x.at(p, k), &dw[..k.min(grid.steps)]);
            if val.len() != m {
                return Err(Error::InvalidInput(format!(
                    "direction has {} components, expected {m}",
                    val.len()
                )));
            }
            check_finite(&val, "direction", reference.scenario, p, k)?;
            chunk[k * m..(k + 1) * m].copy_from_slice(&val);
        }
        Ok(())
    })
}
