//! Empirical orders of the variational remainders.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::control::ControlProcess;
use crate::model::spec::ProblemSpec;
use crate::scalar::Real;
use crate::simulate::bundle::PathBundle;
use crate::simulate::forward::{
    perturbation_trace, shifted_trace, simulate_first_variation, simulate_second_variation,
    simulate_state, simulate_state_trace,
};
use crate::simulate::panel::Panel;
use crate::stats::{is_decreasing_geometric, log_log_slope};

/// Norms `‖δx‖`, `‖δx − εy₁‖`, `‖δx − εy₁ − ε²y₂/2‖` in `‖·‖_{∞,2}` per `ε`,
/// and their log-log slopes against `ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderReport {
    pub scenario: usize,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub first_order: Vec<f64>,
    pub second_order: Vec<f64>,
    /// `None` when a norm vanishes (for instance `u = ū`).
    pub slopes: [Option<f64>; 3],
}

/// `sqrt(E max_k |z_k|²)` for `z = a − c₁ b − c₂ d` slot by slot.
fn sup_l2<S: Real>(a: &Panel<S>, terms: &[(S, &Panel<S>)]) -> S {
    let paths = a.paths();
    let n = a.width();
    let mut acc = S::zero();
    let mut r = vec![S::zero(); n];
    for p in 0..paths {
        let mut worst = S::zero();
        for k in 0..a.nodes() {
            r.copy_from_slice(a.at(p, k));
            for (c, panel) in terms {
                for (ri, &bi) in r.iter_mut().zip(panel.at(p, k)) {
                    *ri -= *c * bi;
                }
            }
            worst = worst.max(r.iter().map(|&v| v * v).sum());
        }
        acc += worst;
    }
    (acc / S::from_usize_lossy(paths)).sqrt()
}

/// Runs the three remainder norms for `u^ε = ū + ε(u − ū)` over `eps_list`
/// on one shared bundle.
pub fn remainder_orders<S: Real>(
    spec: &ProblemSpec<S>,
    control_bar: &ControlProcess<S>,
    u: &ControlProcess<S>,
    scenario: usize,
    bundle: &PathBundle<S>,
    eps_list: &[S],
) -> Result<RemainderReport> {
    if eps_list.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "remainder orders need at least 3 values of ε, got {}",
            eps_list.len()
        )));
    }
    if !is_decreasing_geometric(eps_list) {
        return Err(Error::InvalidInput(
            "eps_list must be a decreasing geometric sequence in (0, 1)".into(),
        ));
    }
    let reference = simulate_state(spec, control_bar, scenario, bundle)?;
    let v = perturbation_trace(spec, &reference, u, bundle)?;
    let y1 = simulate_first_variation(spec, &reference, &v, bundle)?;
    let y2 = simulate_second_variation(spec, &reference, &v, bundle, &y1)?;
    let half = S::lit(0.5);
    let mut delta = Vec::with_capacity(eps_list.len());
    let mut first = Vec::with_capacity(eps_list.len());
    let mut second = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let trace = shifted_trace(&reference.u, &v, eps);
        let x_eps = simulate_state_trace(spec, &trace, scenario, bundle)?;
        let dx = x_eps.axpy(-S::one(), &reference.x);
        delta.push(sup_l2(&dx, &[]).as_f64());
        first.push(sup_l2(&dx, &[(eps, &y1)]).as_f64());
        second.push(sup_l2(&dx, &[(eps, &y1), (half * eps * eps, &y2)]).as_f64());
    }
    let eps: Vec<f64> = eps_list.iter().map(|e| e.as_f64()).collect();
    let slopes = [
        log_log_slope(&eps, &delta),
        log_log_slope(&eps, &first),
        log_log_slope(&eps, &second),
    ];
    Ok(RemainderReport {
        scenario,
        eps,
        delta,
        first_order: first,
        second_order: second,
        slopes,
    })
}
