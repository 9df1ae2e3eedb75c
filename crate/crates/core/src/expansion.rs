//! The second-order expansion of the cost difference
//! `ΔJ(ε) = J(ū + εv; λ) − J(ū; λ) = a₁ε + a₂ε² + o(ε²)` with
//! `a₁ = −∫E∫⟨∂_uH, v⟩dt dλ` and
//! `a₂ = −∫E∫[⟨𝕊y₁, v⟩ + ½⟨(∂_uuH + ∂_uσᵀP₂∂_uσ)v, v⟩]dt dλ`.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::Analysis;
use crate::conditions::singular::all_quantities;
use crate::conditions::{Tolerance, Verdict};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_operator, Mat};
use crate::model::control::ControlProcess;
use crate::robust::{cost_samples, weighted_samples};
use crate::scalar::{dot, Real};
use crate::simulate::forward::{shifted_trace, simulate_state_trace, StatePath};
use crate::simulate::panel::Panel;
use crate::stats::{is_decreasing_geometric, log_log_slope, Estimate};

/// Powers `ε¹..ε^FIT_DEGREE` in the coefficient fit.
pub const FIT_DEGREE: usize = 4;

/// `2⁻², …, 2⁻⁷`.
pub fn default_eps<S: Real>() -> Vec<S> {
    (2..=7).map(|k| S::lit(0.5f64.powi(k))).collect()
}

/// Expansion at one `Λ^ū` vertex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionVertex<S> {
    pub vertex: usize,
    pub weights: Vec<S>,
    /// `ΔJ(ε)` in `eps` order.
    pub delta_j: Vec<Estimate<S>>,
    pub a1: Estimate<S>,
    pub a2: Estimate<S>,
    pub a1_predicted: Estimate<S>,
    pub a2_predicted: Estimate<S>,
    /// `|a₁| = 0` within tolerance.
    pub a1_vanishes: Verdict,
    /// `ΔJ − a₁ε − a₂ε²` with the fitted coefficients.
    pub remainder: Vec<S>,
    /// Log-log slope of `|r|` over the smaller half of `eps`; `None` when the
    /// remainder is at rounding level.
    pub remainder_slope: Option<S>,
}

impl<S: Real> ExpansionVertex<S> {
    /// `(a₂ − a₂^pred) / combined stderr`, `None` when both are exact.
    pub fn a2_z_score(&self) -> Option<S> {
        let se = self.a2.combined_stderr(&self.a2_predicted);
        (se > S::zero()).then(|| (self.a2.mean - self.a2_predicted.mean) / se)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionReport<S> {
    pub eps: Vec<S>,
    pub fit_degree: usize,
    pub argmax_vertices: Vec<usize>,
    pub vertices: Vec<ExpansionVertex<S>>,
}

impl<S: Real> ExpansionReport<S> {
    /// One row per `ε` with `ΔJ`, its stderr and the remainder per vertex.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "eps")?;
        for v in &self.vertices {
            write!(out, ",delta_j_v{0},stderr_v{0},remainder_v{0}", v.vertex)?;
        }
        writeln!(out)?;
        for (j, eps) in self.eps.iter().enumerate() {
            write!(out, "{:e}", eps.as_f64())?;
            for v in &self.vertices {
                let d = v.delta_j[j];
                write!(
                    out,
                    ",{:e},{:e},{:e}",
                    d.mean.as_f64(),
                    d.stderr.as_f64(),
                    v.remainder[j].as_f64()
                )?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Per-path `J(ū + εv; γ) − J(ū; γ)` on the analysis bundle.
pub fn cost_difference<S: Real>(
    analysis: &Analysis<'_, S>,
    scenario: usize,
    v: &Panel<S>,
    eps: S,
) -> Result<Vec<S>> {
    let trace = shifted_trace(&analysis.scenarios[scenario].reference.u, v, eps);
    let x = simulate_state_trace(analysis.spec, &trace, scenario, analysis.bundle)?;
    let state = StatePath {
        scenario,
        x,
        u: trace,
    };
    let costs = cost_samples(analysis.spec, &state, analysis.bundle)?;
    Ok(costs
        .iter()
        .zip(&analysis.costs.samples[scenario])
        .map(|(&c, &b)| c - b)
        .collect())
}

/// Per-path coefficient samples `L·ΔJ_p` for every fitted power.
fn coefficient_samples<S: Real>(fit: &Mat<S>, delta: &[Vec<S>]) -> Vec<Vec<S>> {
    let paths = delta[0].len();
    (0..fit.rows())
        .map(|c| {
            (0..paths)
                .map(|p| (0..delta.len()).fold(S::zero(), |acc, j| acc + fit[(c, j)] * delta[j][p]))
                .collect()
        })
        .collect()
}

/// Per-scenario per-path `(a₁^pred, a₂^pred)` integrands summed over time.
fn predicted_samples<S: Real>(
    analysis: &Analysis<'_, S>,
    u: &ControlProcess<S>,
) -> Result<(Vec<Vec<S>>, Vec<Vec<S>>)> {
    let m = analysis.spec.control_dim();
    let grid = *analysis.bundle.grid();
    let dt = grid.dt();
    let half = S::lit(0.5);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for g in 0..analysis.spec.scenarios.len() {
        let v = analysis.perturbation(g, u)?;
        let y1 = analysis.first_variation(g, &v)?;
        let s_term = analysis.s_pairing(g, &y1, &v);
        let q = &all_quantities(analysis)?[g];
        let mut a1 = Vec::with_capacity(s_term.len());
        let mut a2 = Vec::with_capacity(s_term.len());
        for (p, s_p) in s_term.into_iter().enumerate() {
            let (mut h1, mut h2) = (S::zero(), S::zero());
            for k in 0..grid.steps {
                let slot = q.at(p, k);
                let vk = v.at(p, k);
                h1 += dot(&slot[..m], vk) * dt;
                h2 += Mat::from_row_major(m, m, slot[m..].to_vec()).bilinear(vk, vk) * dt;
            }
            a1.push(-h1);
            a2.push(-(s_p + half * h2));
        }
        first.push(a1);
        second.push(a2);
    }
    Ok((first, second))
}

/// Evaluates `ΔJ(ε)` along `u^ε = ū + ε(u − ū)` on the analysis bundle
/// (common random numbers across `ε`), fits `a₁..a₄` by least squares and
/// compares `a₁, a₂` with their adjoint-based predictions at every `Λ^ū`
/// vertex.
///
/// # Errors
/// [`Error::InvalidInput`] unless `eps_list` is a decreasing geometric
/// sequence in `(0, 1)` with at least four values.
pub fn expansion_scan<S: Real>(
    analysis: &Analysis<'_, S>,
    u: &ControlProcess<S>,
    eps_list: &[S],
    tol: Tolerance<S>,
) -> Result<ExpansionReport<S>> {
    if eps_list.len() < FIT_DEGREE {
        return Err(Error::InvalidInput(format!(
            "the expansion fit needs at least {FIT_DEGREE} values of ε, got {}",
            eps_list.len()
        )));
    }
    if !is_decreasing_geometric(eps_list) {
        return Err(Error::InvalidInput(
            "eps_list must be a decreasing geometric sequence in (0, 1)".into(),
        ));
    }
    let spec = analysis.spec;
    let vandermonde = Mat::from_rows(
        &eps_list
            .iter()
            .map(|&e| (1..=FIT_DEGREE).map(|k| e.powi(k as i32)).collect())
            .collect::<Vec<Vec<S>>>(),
    );
    let fit = least_squares_operator(&vandermonde)
        .ok_or_else(|| Error::Internal("ill-conditioned expansion fit".into()))?;
    // delta[g][j][p]
    let mut delta = Vec::with_capacity(spec.scenarios.len());
    for g in 0..spec.scenarios.len() {
        let v = analysis.perturbation(g, u)?;
        let per_eps = eps_list
            .iter()
            .map(|&eps| cost_difference(analysis, g, &v, eps))
            .collect::<Result<Vec<Vec<S>>>>()?;
        delta.push(per_eps);
    }
    let (pred1, pred2) = predicted_samples(analysis, u)?;
    let argmax = analysis.argmax().to_vec();
    let tail = eps_list.len() / 2;
    let vertices = argmax
        .iter()
        .map(|&vertex| {
            let weights = analysis.vertex(vertex).to_vec();
            let combined: Vec<Vec<S>> = (0..eps_list.len())
                .map(|j| {
                    let per_scenario: Vec<Vec<S>> = delta.iter().map(|d| d[j].clone()).collect();
                    weighted_samples(&per_scenario, &weights)
                })
                .collect();
            let delta_j: Vec<Estimate<S>> =
                combined.iter().map(|s| Estimate::from_samples(s)).collect();
            let coef = coefficient_samples(&fit, &combined);
            let a1 = Estimate::from_samples(&coef[0]);
            let a2 = Estimate::from_samples(&coef[1]);
            let remainder: Vec<S> = eps_list
                .iter()
                .zip(&delta_j)
                .map(|(&e, d)| d.mean - a1.mean * e - a2.mean * e * e)
                .collect();
            let size = delta_j.iter().fold(S::zero(), |m, d| m.max(d.mean.abs()));
            let floor = S::lit(64.0) * S::epsilon() * (S::one() + size);
            let remainder_slope = if remainder[tail..].iter().all(|r| r.abs() > floor) {
                log_log_slope(&eps_list[tail..], &remainder[tail..])
            } else {
                None
            };
            ExpansionVertex {
                vertex,
                a1_vanishes: tol.vanishing(a1.mean.abs(), a1.stderr),
                a1_predicted: Estimate::from_samples(&weighted_samples(&pred1, &weights)),
                a2_predicted: Estimate::from_samples(&weighted_samples(&pred2, &weights)),
                weights,
                delta_j,
                a1,
                a2,
                remainder,
                remainder_slope,
            }
        })
        .collect();
    Ok(ExpansionReport {
        eps: eps_list.to_vec(),
        fit_degree: FIT_DEGREE,
        argmax_vertices: argmax,
        vertices,
    })
}
