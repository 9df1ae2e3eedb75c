//! Singularity of `ū`: `∫∂_u H dλ = 0` and
//! `∫(∂_uu H + ∂_u σᵀP₂∂_u σ) dλ = 0` for every `λ ∈ Λ^ū`.

use serde::Serialize;

use crate::analysis::Analysis;
use crate::conditions::{Tolerance, Verdict};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianJet;
use crate::scalar::{norm_sq, Real};
use crate::simulate::forward::scenario_of;
use crate::simulate::panel::Panel;
use crate::stats::Estimate;

/// Largest node-wise mean of a nonnegative process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeStat<S> {
    /// `max_k E|q(t_k)|`.
    pub value: S,
    pub stderr: S,
    pub node: usize,
    pub time: S,
}

/// Both singularity quantities at one measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexSingularity<S> {
    pub vertex: Option<usize>,
    pub weights: Vec<S>,
    /// `|∫∂_u H dλ|` (Euclidean norm).
    pub first_order: NodeStat<S>,
    /// `|∫(∂_uu H + ∂_u σᵀP₂∂_u σ) dλ|` (Frobenius norm).
    pub second_order: NodeStat<S>,
    pub first_order_verdict: Verdict,
    pub second_order_verdict: Verdict,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularReport<S> {
    pub verdict: Verdict,
    pub argmax_vertices: Vec<usize>,
    pub vertices: Vec<VertexSingularity<S>>,
    /// Largest first-order quantity over the vertices.
    pub first_order_max: S,
    /// Largest second-order quantity over the vertices.
    pub second_order_max: S,
}

impl<S: Real> SingularReport<S> {
    /// Describes the quantity that rules singularity out, if any.
    pub fn failure(&self) -> Option<String> {
        self.vertices
            .iter()
            .find(|v| v.verdict == Verdict::Violated)
            .map(|v| {
                let which = if v.first_order_verdict == Verdict::Violated {
                    ("|∫∂_uH dλ|", v.first_order)
                } else {
                    ("|∫(∂_uuH + ∂_uσᵀP₂∂_uσ) dλ|", v.second_order)
                };
                format!(
                    "{} = {} (stderr {}) at vertex {:?}, t = {}",
                    which.0, which.1.value, which.1.stderr, v.vertex, which.1.time
                )
            })
    }
}

/// `∂_u H` (first m entries) and `∂_uu H + ∂_u σᵀP₂∂_u σ` (next m·m,
/// row-major) at nodes `0..N` of one scenario.
fn scenario_quantities<S: Real>(analysis: &Analysis<'_, S>, scenario: usize) -> Result<Panel<S>> {
    let spec = analysis.spec;
    let sc = scenario_of(spec, scenario)?;
    let data = &analysis.scenarios[scenario];
    let bundle = analysis.bundle;
    let grid = *bundle.grid();
    let (n, m) = (spec.state_dim(), spec.control_dim());
    let width = m + m * m;
    Panel::par_build(bundle.n_paths(), grid.steps, width, |p, chunk| {
        for k in 0..grid.steps {
            let t = grid.node(k);
            let (x, u) = (data.reference.x.at(p, k), data.reference.u.at(p, k));
            let b = sc.drift.jet(t, x, u);
            let s = sc.diffusion.jet(t, x, u);
            let f = sc.running_jet(t, x, u);
            let h = HamiltonianJet::from_jets(
                &b,
                &s,
                &f,
                data.adjoint.p1.at(p, k),
                data.adjoint.q1.at(p, k),
            );
            let p2 = data.adjoint.p2.mat_at(p, k, n);
            let q = &h.hess.uu + &(&(&s.du.transpose() * &p2) * &s.du);
            let slot = &mut chunk[k * width..(k + 1) * width];
            slot[..m].copy_from_slice(&h.du);
            slot[m..].copy_from_slice(q.as_slice());
        }
        Ok(())
    })
}

fn node_stat<S: Real>(
    analysis: &Analysis<'_, S>,
    panels: &[Panel<S>],
    range: std::ops::Range<usize>,
    weights: &[S],
) -> NodeStat<S> {
    let grid = analysis.bundle.grid();
    let paths = analysis.bundle.n_paths();
    let width = range.len();
    let mut best = NodeStat {
        value: S::neg_infinity(),
        stderr: S::zero(),
        node: 0,
        time: S::zero(),
    };
    let mut combined = vec![S::zero(); width];
    for k in 0..grid.steps {
        let samples: Vec<S> = (0..paths)
            .map(|p| {
                combined.iter_mut().for_each(|c| *c = S::zero());
                for (&w, panel) in weights.iter().zip(panels) {
                    for (c, &v) in combined.iter_mut().zip(&panel.at(p, k)[range.clone()]) {
                        *c += w * v;
                    }
                }
                norm_sq(&combined).sqrt()
            })
            .collect();
        let e = Estimate::from_samples(&samples);
        if e.mean > best.value {
            best = NodeStat {
                value: e.mean,
                stderr: e.stderr,
                node: k,
                time: grid.node(k),
            };
        }
    }
    if grid.steps == 0 {
        best.value = S::zero();
    }
    best
}

fn vertex_stats<S: Real>(
    analysis: &Analysis<'_, S>,
    quantities: &[Panel<S>],
    vertex: Option<usize>,
    weights: &[S],
    tol: Tolerance<S>,
) -> VertexSingularity<S> {
    let m = analysis.spec.control_dim();
    let first_order = node_stat(analysis, quantities, 0..m, weights);
    let second_order = node_stat(analysis, quantities, m..m + m * m, weights);
    let first_order_verdict = tol.vanishing(first_order.value, first_order.stderr);
    let second_order_verdict = tol.vanishing(second_order.value, second_order.stderr);
    VertexSingularity {
        vertex,
        weights: weights.to_vec(),
        first_order,
        second_order,
        first_order_verdict,
        second_order_verdict,
        verdict: Verdict::all([first_order_verdict, second_order_verdict]),
    }
}

/// Per-scenario panels of [`scenario_quantities`], cached on the analysis.
pub(crate) fn all_quantities<'b, S: Real>(analysis: &'b Analysis<'_, S>) -> Result<&'b [Panel<S>]> {
    if let Some(q) = analysis.quantities.get() {
        return Ok(q);
    }
    let q = (0..analysis.spec.scenarios.len())
        .map(|g| scenario_quantities(analysis, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(analysis.quantities.get_or_init(|| q))
}

/// Both singularity quantities at an arbitrary measure `weights`.
pub fn singular_vertex_stats<S: Real>(
    analysis: &Analysis<'_, S>,
    weights: &[S],
    tol: Tolerance<S>,
) -> Result<VertexSingularity<S>> {
    if weights.len() != analysis.spec.scenarios.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} scenarios",
            weights.len(),
            analysis.spec.scenarios.len()
        )));
    }
    let quantities = all_quantities(analysis)?;
    Ok(vertex_stats(analysis, quantities, None, weights, tol))
}

/// Tests singularity at every `Λ^ū` vertex; by linearity this covers
/// their hull.
pub fn check_singular<S: Real>(
    analysis: &Analysis<'_, S>,
    tol: Tolerance<S>,
) -> Result<SingularReport<S>> {
    let argmax = analysis.argmax().to_vec();
    if argmax.is_empty() {
        return Err(Error::Internal("argmax measure set is empty".into()));
    }
    let quantities = all_quantities(analysis)?;
    let vertices: Vec<VertexSingularity<S>> = argmax
        .iter()
        .map(|&v| vertex_stats(analysis, quantities, Some(v), analysis.vertex(v), tol))
        .collect();
    let first_order_max = vertices
        .iter()
        .fold(S::zero(), |m, v| m.max(v.first_order.value));
    let second_order_max = vertices
        .iter()
        .fold(S::zero(), |m, v| m.max(v.second_order.value));
    Ok(SingularReport {
        verdict: Verdict::all(vertices.iter().map(|v| v.verdict)),
        argmax_vertices: argmax,
        vertices,
        first_order_max,
        second_order_max,
    })
}

/// `check_singular`, failing with [`Error::NotSingular`] when it is
/// violated.
pub(crate) fn require_singular<S: Real>(
    analysis: &Analysis<'_, S>,
    tol: Tolerance<S>,
) -> Result<SingularReport<S>> {
    let report = check_singular(analysis, tol)?;
    match report.failure() {
        Some(msg) if report.verdict == Verdict::Violated => Err(Error::NotSingular(msg)),
        _ => Ok(report),
    }
}
