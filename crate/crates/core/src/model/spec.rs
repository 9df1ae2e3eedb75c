//! The full uncertain control problem and its validation.

use serde::Serialize;

use crate::model::grid::TimeGrid;
use crate::model::scenario::{ProcessFn, Scenario};
use crate::model::sets::{ControlBox, MeasurePolytope};
use crate::scalar::Real;

/// How the adjoint pairs are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjointMode {
    /// Closed forms supplied with every scenario.
    Analytic,
    /// Least-squares Monte Carlo on polynomial features of the state.
    Regression { degree: usize, ridge: bool },
}

impl AdjointMode {
    pub fn regression(degree: usize) -> Self {
        Self::Regression {
            degree,
            ridge: true,
        }
    }
}

/// Source of the symmetric Malliavin derivatives `∇𝕊` and `∇ū`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MalliavinMode {
    /// Both vanish; only valid when `𝕊` and `ū` are deterministic.
    DeclaredZero,
    /// Closed forms from the scenarios (`∇𝕊`) and the spec (`∇ū`).
    ClosedForm,
}

#[derive(Clone)]
pub struct ProblemSpec<S: Real> {
    pub name: String,
    pub grid: TimeGrid<S>,
    pub control_box: ControlBox<S>,
    pub scenarios: Vec<Scenario<S>>,
    pub measures: MeasurePolytope<S>,
    pub x0: Vec<S>,
    pub adjoint_mode: AdjointMode,
    pub malliavin_mode: MalliavinMode,
    /// Closed form of `∇ū` as a function of `(t, x̄_γ(t))`, length m.
    pub nabla_u: Option<ProcessFn<S>>,
}

impl<S: Real> std::fmt::Debug for ProblemSpec<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("control_box", &self.control_box)
            .field("scenarios", &self.scenarios)
            .field("measures", &self.measures)
            .field("x0", &self.x0)
            .field("adjoint_mode", &self.adjoint_mode)
            .field("malliavin_mode", &self.malliavin_mode)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl<S: Real> ProblemSpec<S> {
    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_box.dim()
    }

    pub fn with_adjoint_mode(mut self, mode: AdjointMode) -> Self {
        self.adjoint_mode = mode;
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid<S>) -> Self {
        self.grid = grid;
        self
    }

    /// Lists every violated invariant; an empty report means the spec is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if let Some(msg) = self.grid.check() {
            report.push("grid", msg);
        }
        for msg in self.control_box.violations() {
            report.push("control_box", msg);
        }
        if self.scenarios.is_empty() {
            report.push("scenarios", "at least one scenario is required");
        }
        if self.measures.scenario_count() != self.scenarios.len() && !self.measures.is_empty() {
            report.push(
                "measures",
                format!(
                    "scenario count {} differs from the number of scenarios {}",
                    self.measures.scenario_count(),
                    self.scenarios.len()
                ),
            );
        }
        for msg in self.measures.violations(self.scenarios.len()) {
            report.push("measures", msg);
        }
        let n = self.state_dim();
        let m = self.control_dim();
        if n == 0 {
            report.push("x0", "initial state has dimension 0");
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            report.push("x0", "initial state is not finite");
        }
        let probe_u = self.control_box.center();
        for (g, sc) in self.scenarios.iter().enumerate() {
            self.check_scenario(&mut report, g, sc, n, m, &probe_u);
        }
        if self.malliavin_mode == MalliavinMode::ClosedForm && self.nabla_u.is_none() {
            report.push("malliavin", "closed-form mode needs ∇ū");
        }
        report
    }

    fn check_scenario(
        &self,
        report: &mut ValidationReport,
        g: usize,
        sc: &Scenario<S>,
        n: usize,
        m: usize,
        u: &[S],
    ) {
        let field = format!("scenarios[{g}]");
        let dims = [
            ("drift", sc.drift.state_dim(), sc.drift.control_dim()),
            (
                "diffusion",
                sc.diffusion.state_dim(),
                sc.diffusion.control_dim(),
            ),
            (
                "running_cost",
                sc.running.state_dim(),
                sc.running.control_dim(),
            ),
            ("terminal_cost", sc.terminal.state_dim(), m),
        ];
        let mut dims_ok = true;
        for (what, dn, dm) in dims {
            if dn != n || dm != m {
                report.push(
                    &field,
                    format!("{what} declares dimensions ({dn}, {dm}), expected ({n}, {m})"),
                );
                dims_ok = false;
            }
        }
        if !dims_ok || u.len() != m {
            return;
        }
        let t = S::zero();
        let x = &self.x0;
        for (what, f) in [("drift", &sc.drift), ("diffusion", &sc.diffusion)] {
            let value = f.value(t, x, u);
            if value.len() != n {
                report.push(
                    &field,
                    format!("{what} value has length {}, expected {n}", value.len()),
                );
            }
            if let Some(msg) = f.jet(t, x, u).shape_error(n, m) {
                report.push(
                    &field,
                    format!("derivative shape mismatch in {what}: {msg}"),
                );
            }
        }
        if let Some(jet) = sc.running.jet(t, x, u) {
            let shapes = [
                ("∂_x f", (jet.dx.len(), 1), (n, 1)),
                ("∂_u f", (jet.du.len(), 1), (m, 1)),
                ("∂_xx f", jet.dxx.shape(), (n, n)),
                ("∂_xu f", jet.dxu.shape(), (m, n)),
                ("∂_uu f", jet.duu.shape(), (m, m)),
            ];
            for (what, got, want) in shapes {
                if got != want {
                    report.push(
                        &field,
                        format!("derivative shape mismatch in {what}: {got:?} vs {want:?}"),
                    );
                }
            }
        }
        if let Some(jet) = sc.terminal.jet(x) {
            if jet.dx.len() != n || jet.dxx.shape() != (n, n) {
                report.push(&field, "derivative shape mismatch in terminal cost");
            }
        }
        if self.adjoint_mode == AdjointMode::Analytic {
            match &sc.adjoint {
                None => report.push(
                    &field,
                    "analytic adjoint mode needs closed forms for P1, Q1, P2, Q2",
                ),
                Some(cf) => {
                    let xs = self.x0.as_slice();
                    let lens = [
                        ("P1", cf.p1.as_ref()(t, xs).len(), n),
                        ("Q1", cf.q1.as_ref()(t, xs).len(), n),
                        ("P2", cf.p2.as_ref()(t, xs).len(), n * n),
                        ("Q2", cf.q2.as_ref()(t, xs).len(), n * n),
                    ];
                    for (what, got, want) in lens {
                        if got != want {
                            report.push(
                                &field,
                                format!("closed-form {what} has length {got}, expected {want}"),
                            );
                        }
                    }
                }
            }
        }
        if self.malliavin_mode == MalliavinMode::ClosedForm && sc.nabla_s.is_none() {
            report.push(&field, "closed-form Malliavin mode needs ∇𝕊");
        }
    }
}
