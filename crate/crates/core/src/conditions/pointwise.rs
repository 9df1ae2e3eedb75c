//! The pointwise second-order condition on a `(τ, v)` grid:
//! `⟨𝕊∂_u b d, d⟩ + ⟨∇𝕊∂_u σ d, d⟩ − ⟨𝕊∂_u σ d, ∇ū⟩ ≤ 0` with `d = v − ū(τ)`,
//! integrated against one measure of `Λ^ū` common to all grid points.

use serde::Serialize;

use crate::analysis::Analysis;
use crate::conditions::{Tolerance, Verdict};
use crate::error::{Error, Result};
use crate::model::spec::MalliavinMode;
use crate::robust::weighted_samples;
use crate::scalar::{dot, Real};
use crate::simulate::forward::scenario_of;
use crate::stats::Estimate;

/// Relative path spread below which a process counts as deterministic.
const DETERMINISTIC_SPREAD: f64 = 1e-9;

/// Left side at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseValue<S> {
    pub tau: S,
    pub node: usize,
    pub v: Vec<S>,
    /// `v = ū(τ)` on every path and scenario; such points are 0 by
    /// construction and carry no information.
    pub zero_displacement: bool,
    pub scenario_values: Vec<Estimate<S>>,
    /// Per `Λ^ū` vertex, in `argmax_vertices` order.
    pub vertex_values: Vec<Estimate<S>>,
}

/// Grid point attaining `M(λ) = max_{τ,v}` for one vertex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness<S> {
    pub vertex: usize,
    pub tau: S,
    pub v: Vec<S>,
    pub value: Estimate<S>,
}

/// Which form of the measure quantifier the verdict uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaClaim {
    /// One measure for every `(τ, v)`.
    Common,
    /// One measure per `v`, used when monotonicity fails.
    PerV,
}

/// `min_λ max_τ` for one `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerVEntry<S> {
    pub v: Vec<S>,
    pub statistic: S,
    pub stderr: S,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseReport<S> {
    pub argmax_vertices: Vec<usize>,
    pub points: Vec<PointwiseValue<S>>,
    /// One witness per vertex.
    pub witnesses: Vec<Witness<S>>,
    /// `min_λ M(λ)`.
    pub statistic: S,
    pub statistic_stderr: S,
    pub per_v: Vec<PerVEntry<S>>,
    pub claim: LambdaClaim,
    pub verdict: Verdict,
    pub note: String,
}

fn check_deterministic<S: Real>(what: &str, scenario: usize, spread: S, size: S) -> Result<()> {
    if spread > S::lit(DETERMINISTIC_SPREAD) * (S::one() + size) {
        return Err(Error::MalliavinUnsupported(format!(
            "{what} of scenario {scenario} varies across paths (spread {spread}) but the Malliavin terms are declared zero"
        )));
    }
    Ok(())
}

/// Max over the non-trivial grid points of one vertex column, with the
/// stderr of the maximizer.
fn column_max<'p, S: Real>(
    points: impl Iterator<Item = &'p PointwiseValue<S>>,
    column: usize,
) -> Option<(&'p PointwiseValue<S>, Estimate<S>)>
where
    S: 'p,
{
    points
        .filter(|pt| !pt.zero_displacement)
        .map(|pt| (pt, pt.vertex_values[column]))
        .fold(
            None,
            |acc: Option<(&PointwiseValue<S>, Estimate<S>)>, cur| match acc {
                Some(a) if a.1.mean >= cur.1.mean => Some(a),
                _ => Some(cur),
            },
        )
}

/// Evaluates the left side at every `(τ, v, Λ^ū vertex)`. The grid samples
/// the "a.e. τ, every v" quantifiers, so "satisfied" means "not refuted on
/// the grid". When `monotonicity_fails`, the verdict uses one measure per
/// `v` instead of a common one.
///
/// # Errors
/// [`Error::MalliavinUnsupported`] when the Malliavin terms are declared zero
/// but `𝕊` or `ū` vary across paths, or closed forms are missing.
pub fn pointwise_sonc<S: Real>(
    analysis: &Analysis<'_, S>,
    tau_grid: &[S],
    v_grid: &[Vec<S>],
    tol: Tolerance<S>,
    monotonicity_fails: bool,
) -> Result<PointwiseReport<S>> {
    let spec = analysis.spec;
    let grid = *analysis.bundle.grid();
    let (n, m) = (spec.state_dim(), spec.control_dim());
    let paths = analysis.bundle.n_paths();
    if tau_grid.is_empty() || v_grid.is_empty() {
        return Err(Error::InvalidInput("τ and v grids must be nonempty".into()));
    }
    for &tau in tau_grid {
        if !(tau >= S::zero() && tau <= grid.horizon) {
            return Err(Error::InvalidInput(format!(
                "τ = {tau} outside [0, {}]",
                grid.horizon
            )));
        }
    }
    for v in v_grid {
        if v.len() != m || !spec.control_box.contains(v) {
            return Err(Error::InvalidInput(format!(
                "grid control {v:?} is not in U"
            )));
        }
    }
    let nabla_u = match spec.malliavin_mode {
        MalliavinMode::DeclaredZero => {
            for (g, data) in analysis.scenarios.iter().enumerate() {
                check_deterministic("𝕊", g, data.s.s.path_spread(), data.s.s.max_abs())?;
                check_deterministic(
                    "ū",
                    g,
                    data.reference.u.path_spread(),
                    data.reference.u.max_abs(),
                )?;
            }
            None
        }
        MalliavinMode::ClosedForm => Some(
            spec.nabla_u
                .as_ref()
                .ok_or_else(|| Error::MalliavinUnsupported("no closed form for ∇ū".into()))?,
        ),
    };
    let argmax = analysis.argmax().to_vec();
    let mut points = Vec::with_capacity(tau_grid.len() * v_grid.len());
    for &tau in tau_grid {
        let k = grid.node_at_or_before(tau);
        let t = grid.node(k);
        for v in v_grid {
            let mut zero_displacement = true;
            let mut samples = Vec::with_capacity(spec.scenarios.len());
            for (g, data) in analysis.scenarios.iter().enumerate() {
                let sc = scenario_of(spec, g)?;
                let col: Vec<S> = (0..paths)
                    .map(|p| {
                        let (x, ubar) = (data.reference.x.at(p, k), data.reference.u.at(p, k));
                        let d: Vec<S> = v.iter().zip(ubar).map(|(&a, &b)| a - b).collect();
                        if d.iter().any(|&c| c != S::zero()) {
                            zero_displacement = false;
                        }
                        let bu_d = sc.drift.jet(t, x, ubar).du.mul_vec(&d);
                        let su_d = sc.diffusion.jet(t, x, ubar).du.mul_vec(&d);
                        let s = data.s.s.mat_at(p, k, m);
                        debug_assert_eq!(s.cols(), n);
                        let mut lhs = dot(&s.mul_vec(&bu_d), &d);
                        if let Some(f) = nabla_u {
                            let ns = data.s.nabla_s.mat_at(p, k, m);
                            lhs += dot(&ns.mul_vec(&su_d), &d) - dot(&s.mul_vec(&su_d), &f(t, x));
                        }
                        lhs
                    })
                    .collect();
                samples.push(col);
            }
            points.push(PointwiseValue {
                tau,
                node: k,
                v: v.clone(),
                zero_displacement,
                scenario_values: samples.iter().map(|s| Estimate::from_samples(s)).collect(),
                vertex_values: argmax
                    .iter()
                    .map(|&a| {
                        Estimate::from_samples(&weighted_samples(&samples, analysis.vertex(a)))
                    })
                    .collect(),
            });
        }
    }
    let mut witnesses = Vec::with_capacity(argmax.len());
    let mut best: Option<Estimate<S>> = None;
    for (col, &vertex) in argmax.iter().enumerate() {
        if let Some((pt, value)) = column_max(points.iter(), col) {
            witnesses.push(Witness {
                vertex,
                tau: pt.tau,
                v: pt.v.clone(),
                value,
            });
            if best.is_none_or(|b| value.mean < b.mean) {
                best = Some(value);
            }
        }
    }
    let best = best.unwrap_or(Estimate::exact(S::zero()));
    let per_v: Vec<PerVEntry<S>> = v_grid
        .iter()
        .map(|v| {
            let stat = (0..argmax.len())
                .filter_map(|col| {
                    column_max(points.iter().filter(|pt| &pt.v == v), col).map(|(_, e)| e)
                })
                .fold(None, |acc: Option<Estimate<S>>, e| match acc {
                    Some(a) if a.mean <= e.mean => Some(a),
                    _ => Some(e),
                })
                .unwrap_or(Estimate::exact(S::zero()));
            PerVEntry {
                v: v.clone(),
                statistic: stat.mean,
                stderr: stat.stderr,
                verdict: tol.nonpositive(stat.mean, stat.stderr),
            }
        })
        .collect();
    let (claim, verdict) = if monotonicity_fails {
        (
            LambdaClaim::PerV,
            Verdict::all(per_v.iter().map(|e| e.verdict)),
        )
    } else {
        (LambdaClaim::Common, tol.nonpositive(best.mean, best.stderr))
    };
    let note = match (claim, verdict) {
        (LambdaClaim::PerV, _) => {
            "monotonicity fails: one measure per v, common-measure claim withdrawn".to_string()
        }
        (_, Verdict::Satisfied) => "not refuted on the sampled (τ, v) grid".to_string(),
        _ => "common measure over the sampled (τ, v) grid".to_string(),
    };
    Ok(PointwiseReport {
        argmax_vertices: argmax,
        points,
        witnesses,
        statistic: best.mean,
        statistic_stderr: best.stderr,
        per_v,
        claim,
        verdict,
        note,
    })
}
