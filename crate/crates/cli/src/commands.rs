//! One function per subcommand. Each loads the problem, runs its part of the
//! pipeline on a seeded bundle and writes `<command>.json` into `--out`.

use std::fs;

use robust_sonc::adjoint::{adjoint_fourth_moments, duality_both, DualityReport};
use robust_sonc::conditions::{
    check_monotonicity, check_singular, integral_sonc, lebesgue_window_scan, pointwise_sonc,
    window_integrands, ConditionReport, PointwiseReport, SingularReport, Tolerance, Verdict,
    WindowReport, WindowTerm,
};
use robust_sonc::expansion::{default_eps, expansion_scan, ExpansionReport};
use robust_sonc::hamiltonian::{s_moment_check, MomentCheck};
use robust_sonc::model::{
    builtin, fd_consistency, parse_config, AdjointMode, ConsistencyReport, ControlProcess,
    MalliavinMode, ProblemSetup, TimeGrid, ValidationReport, BUILTIN_NAMES,
};
use robust_sonc::robust::{paired_difference, robust_cost, CostTable};
use robust_sonc::simulate::{
    generate_paths, simulate_state, write_binary, write_csv, BinaryHeader, FieldShape, PanelField,
    PathBundle, StatePath,
};
use robust_sonc::stats::Estimate;
use robust_sonc::{Analysis, Error, Provenance};
use serde::Serialize;

use crate::args::{
    CheckArgs, ControlArg, ExpandArgs, FormatArg, GlobalArgs, MalliavinArg, ModeArg, PanelArgs,
    SimulateArgs,
};
use crate::output::{
    parse_list, parse_tolerance, parse_vectors, CliError, Sink, EXIT_USAGE, EXIT_VIOLATED,
};

const DEFAULT_BUILTIN: &str = "example";
const DEFAULT_BASIS_DEGREE: usize = 2;
const FD_PROBES: usize = 200;
const FD_TOL: f64 = 1e-6;
/// Window widths `α₀·2⁻ᵏ`, `k = 0..WINDOW_LEVELS`.
const WINDOW_LEVELS: i32 = 7;
/// The default control grid enumerates all `3ᵐ` combinations of
/// lower/center/upper up to this dimension.
const FULL_V_GRID_DIM: usize = 3;

/// The problem after the command-line overrides.
struct Loaded {
    setup: ProblemSetup<f64>,
    tol: Tolerance<f64>,
    sink: Sink,
}

impl Loaded {
    fn bundle(&self, g: &GlobalArgs) -> Result<PathBundle<f64>, CliError> {
        Ok(generate_paths(g.seed, g.paths, &self.setup.spec.grid)?)
    }
}

fn load_setup(g: &GlobalArgs) -> Result<ProblemSetup<f64>, CliError> {
    match (&g.config, &g.builtin) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            Ok(parse_config(&text)?)
        }
        (None, name) => {
            let name = name.as_deref().unwrap_or(DEFAULT_BUILTIN);
            builtin(name).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown builtin {name:?}; expected one of {}",
                    BUILTIN_NAMES.join(", ")
                ))
            })
        }
    }
}

fn apply_overrides(g: &GlobalArgs, setup: &mut ProblemSetup<f64>) -> Result<(), CliError> {
    let spec = &mut setup.spec;
    if let Some(steps) = g.steps {
        spec.grid = TimeGrid::new(spec.grid.horizon, steps)?;
    }
    match g.mode {
        Some(ModeArg::Analytic) => spec.adjoint_mode = AdjointMode::Analytic,
        Some(ModeArg::Regression) => {
            spec.adjoint_mode =
                AdjointMode::regression(g.basis_degree.unwrap_or(DEFAULT_BASIS_DEGREE))
        }
        None => {}
    }
    if let Some(degree) = g.basis_degree {
        match &mut spec.adjoint_mode {
            AdjointMode::Regression { degree: d, .. } => *d = degree,
            AdjointMode::Analytic => {
                return Err(CliError::Usage(
                    "--basis-degree needs --mode regression".into(),
                ))
            }
        }
    }
    match g.malliavin {
        Some(MalliavinArg::Zero) => spec.malliavin_mode = MalliavinMode::DeclaredZero,
        Some(MalliavinArg::ClosedForm) => spec.malliavin_mode = MalliavinMode::ClosedForm,
        None => {}
    }
    Ok(())
}

fn describe(report: &ValidationReport) -> String {
    let lines: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    format!("invalid problem: {}", lines.join("; "))
}

/// Loads, overrides and validates the problem and opens the output
/// directory.
fn load(g: &GlobalArgs) -> Result<Loaded, CliError> {
    let mut setup = load_setup(g)?;
    apply_overrides(g, &mut setup)?;
    let report = setup.spec.validate();
    if !report.is_valid() {
        return Err(CliError::Usage(describe(&report)));
    }
    Ok(Loaded {
        setup,
        tol: parse_tolerance(&g.tol)?,
        sink: Sink::new(&g.out)?,
    })
}

fn control<'a>(setup: &'a ProblemSetup<f64>, which: ControlArg) -> &'a ControlProcess<f64> {
    match which {
        ControlArg::Reference => &setup.reference,
        ControlArg::Candidate => &setup.candidate,
    }
}

fn write_panels(
    sink: &Sink,
    stem: &str,
    format: FormatArg,
    bundle: &PathBundle<f64>,
    fields: &[PanelField<'_, f64>],
) -> Result<String, CliError> {
    let name = match format {
        FormatArg::Csv => format!("{stem}.csv"),
        FormatArg::Binary => format!("{stem}.bin"),
    };
    let header = BinaryHeader {
        seed: bundle.seed(),
        n_paths: bundle.n_paths() as u64,
        steps: bundle.grid().steps as u64,
        horizon: bundle.grid().horizon,
    };
    sink.write(&name, |w| match format {
        FormatArg::Csv => write_csv(w, fields),
        FormatArg::Binary => write_binary(w, header, fields),
    })?;
    Ok(name)
}

fn terminal_mean(state: &StatePath<f64>) -> Vec<Estimate<f64>> {
    let last = state.x.nodes() - 1;
    (0..state.x.width())
        .map(|i| {
            let samples: Vec<f64> = (0..state.x.paths())
                .map(|p| state.x.at(p, last)[i])
                .collect();
            Estimate::from_samples(&samples)
        })
        .collect()
}

#[derive(Serialize)]
struct SimulateScenario {
    scenario: usize,
    terminal_state: Vec<Estimate<f64>>,
}

#[derive(Serialize)]
struct SimulateReport {
    control: &'static str,
    panels: String,
    scenarios: Vec<SimulateScenario>,
}

pub fn simulate(g: &GlobalArgs, a: &SimulateArgs) -> Result<u8, CliError> {
    let run = load(g)?;
    let spec = &run.setup.spec;
    let bundle = run.bundle(g)?;
    let u = control(&run.setup, a.control);
    let states = (0..spec.scenarios.len())
        .map(|s| simulate_state(spec, u, s, &bundle))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut fields = Vec::new();
    for st in &states {
        fields.push(PanelField {
            scenario: st.scenario,
            name: "x",
            shape: FieldShape::Vector,
            panel: &st.x,
        });
        fields.push(PanelField {
            scenario: st.scenario,
            name: "u",
            shape: FieldShape::Vector,
            panel: &st.u,
        });
    }
    let panels = write_panels(&run.sink, "simulate", a.panel.format, &bundle, &fields)?;
    let report = SimulateReport {
        control: match a.control {
            ControlArg::Reference => "reference",
            ControlArg::Candidate => "candidate",
        },
        panels,
        scenarios: states
            .iter()
            .map(|st| SimulateScenario {
                scenario: st.scenario,
                terminal_state: terminal_mean(st),
            })
            .collect(),
    };
    run.sink
        .json("simulate", &Provenance::new(spec, &bundle), &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct AdjointScenario {
    scenario: usize,
    terminal_mismatch: f64,
    ridged_nodes: usize,
    max_asymmetry: f64,
    /// `E sup|P₁|⁴` and `E sup|P₂|⁴`.
    fourth_moments: (f64, f64),
    s_moment: MomentCheck,
    /// Both identities along the candidate direction.
    duality_first: DualityReport,
    duality_second: DualityReport,
}

#[derive(Serialize)]
struct AdjointReport {
    panels: String,
    scenarios: Vec<AdjointScenario>,
}

pub fn adjoint(g: &GlobalArgs, a: &PanelArgs) -> Result<u8, CliError> {
    let run = load(g)?;
    let spec = &run.setup.spec;
    let bundle = run.bundle(g)?;
    let analysis = Analysis::new(spec, &run.setup.reference, &bundle)?;
    let n = spec.state_dim();
    let m = spec.control_dim();
    let mut fields = Vec::new();
    let mut scenarios = Vec::new();
    for (s, sa) in analysis.scenarios.iter().enumerate() {
        let adj = &sa.adjoint;
        let panel = |name, shape, panel| PanelField {
            scenario: s,
            name,
            shape,
            panel,
        };
        fields.push(panel("p1", FieldShape::Vector, &adj.p1));
        fields.push(panel("q1", FieldShape::Vector, &adj.q1));
        fields.push(panel("p2", FieldShape::Matrix(n), &adj.p2));
        fields.push(panel("q2", FieldShape::Matrix(n), &adj.q2));
        fields.push(panel("s", FieldShape::Matrix(m), &sa.s.s));
        fields.push(panel("nabla_s", FieldShape::Matrix(m), &sa.s.nabla_s));
        let v = analysis.perturbation(s, &run.setup.candidate)?;
        let y1 = analysis.first_variation(s, &v)?;
        let (m4_p1, m4_p2) = adjoint_fourth_moments(adj);
        let (duality_first, duality_second) =
            duality_both(spec, &sa.reference, adj, &v, &y1, &bundle)?;
        scenarios.push(AdjointScenario {
            scenario: s,
            terminal_mismatch: adj.diagnostics.terminal_mismatch,
            ridged_nodes: adj.diagnostics.ridged_nodes,
            max_asymmetry: adj.max_asymmetry(),
            fourth_moments: (m4_p1, m4_p2),
            s_moment: s_moment_check(&sa.s, bundle.grid().dt()),
            duality_first,
            duality_second,
        });
    }
    let panels = write_panels(&run.sink, "adjoint", a.format, &bundle, &fields)?;
    run.sink.json(
        "adjoint",
        &Provenance::new(spec, &bundle),
        &AdjointReport { panels, scenarios },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct CostReport {
    reference: CostTable<f64>,
    candidate: CostTable<f64>,
    /// Candidate minus reference per polytope vertex, on common paths.
    vertex_differences: Vec<Estimate<f64>>,
    robust_difference: f64,
}

pub fn cost(g: &GlobalArgs) -> Result<u8, CliError> {
    let run = load(g)?;
    let spec = &run.setup.spec;
    let bundle = run.bundle(g)?;
    let reference = robust_cost(spec, &run.setup.reference, &bundle)?;
    let candidate = robust_cost(spec, &run.setup.candidate, &bundle)?;
    let vertex_differences = spec
        .measures
        .vertices
        .iter()
        .map(|w| {
            paired_difference(
                &candidate.combined_samples(w),
                &reference.combined_samples(w),
            )
        })
        .collect();
    let report = CostReport {
        robust_difference: candidate.robust_value - reference.robust_value,
        reference,
        candidate,
        vertex_differences,
    };
    run.sink
        .json("cost", &Provenance::new(spec, &bundle), &report)?;
    Ok(0)
}

/// `0, T/10, …, 9T/10`.
fn default_tau_grid(horizon: f64) -> Vec<f64> {
    (0..10).map(|k| horizon * k as f64 / 10.0).collect()
}

/// Lower, center and upper corner combinations of the control box.
fn default_v_grid(lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let m = lower.len();
    let level = |i: usize, j: usize| match j {
        0 => lower[i],
        1 => 0.5 * (lower[i] + upper[i]),
        _ => upper[i],
    };
    if m > FULL_V_GRID_DIM {
        return (0..3)
            .map(|j| (0..m).map(|i| level(i, j)).collect())
            .collect();
    }
    let count = 3usize.pow(m as u32);
    (0..count)
        .map(|mut code| {
            (0..m)
                .map(|i| {
                    let j = code % 3;
                    code /= 3;
                    level(i, j)
                })
                .collect()
        })
        .collect()
}

#[derive(Serialize)]
struct CheckReport {
    conditions: Option<ConditionReport<f64>>,
    singular: SingularReport<f64>,
    window: Option<WindowReport<f64>>,
    verdict: Verdict,
}

fn window_report(
    analysis: &Analysis<'_, f64>,
    pointwise: &PointwiseReport<f64>,
    tau: f64,
    v: &[f64],
) -> Result<WindowReport<f64>, CliError> {
    let grid = *analysis.bundle.grid();
    let alpha0 = (0.5 * grid.horizon).min(grid.horizon - tau);
    if !(alpha0 > 0.0) {
        return Err(CliError::Usage(format!(
            "--window-tau {tau} leaves no window inside [0, {}]",
            grid.horizon
        )));
    }
    let alphas: Vec<f64> = (0..WINDOW_LEVELS)
        .map(|k| alpha0 * 0.5f64.powi(k))
        .collect();
    let vertex = pointwise
        .witnesses
        .first()
        .map_or(analysis.argmax()[0], |w| w.vertex);
    let weights = analysis.vertex(vertex).to_vec();
    let panels = (0..analysis.spec.scenarios.len())
        .map(|s| window_integrands(analysis, s, v))
        .collect::<Result<Vec<_>, Error>>()?;
    let terms: Vec<WindowTerm<'_, f64>> = panels
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|((phi, psi), &weight)| WindowTerm { weight, phi, psi })
        .collect();
    Ok(lebesgue_window_scan(&terms, &grid, tau, &alphas)?)
}

pub fn check(g: &GlobalArgs, a: &CheckArgs) -> Result<u8, CliError> {
    let run = load(g)?;
    let spec = &run.setup.spec;
    let bundle = run.bundle(g)?;
    let provenance = Provenance::new(spec, &bundle);
    let tau_grid = match &a.tau_grid {
        Some(raw) => parse_list(raw, "--tau-grid")?,
        None => default_tau_grid(spec.grid.horizon),
    };
    let v_grid = match &a.v_grid {
        Some(raw) => parse_vectors(raw, "--v-grid", spec.control_dim())?,
        None => default_v_grid(&spec.control_box.lower, &spec.control_box.upper),
    };
    let analysis = Analysis::new(spec, &run.setup.reference, &bundle)?;
    let singular = check_singular(&analysis, run.tol)?;
    if singular.verdict == Verdict::Violated {
        let report = CheckReport {
            conditions: None,
            verdict: singular.verdict,
            singular: singular.clone(),
            window: None,
        };
        run.sink.json("check", &provenance, &report)?;
        return Err(Error::NotSingular(singular.failure().unwrap_or_default()).into());
    }
    let integral = integral_sonc(
        &analysis,
        std::slice::from_ref(&run.setup.candidate),
        run.tol,
    )?;
    let monotonicity = check_monotonicity(
        &analysis,
        &run.setup.candidate,
        &run.setup.reference,
        run.tol,
    )?;
    let pointwise = pointwise_sonc(&analysis, &tau_grid, &v_grid, run.tol, monotonicity.fails())?;
    let window = match a.window_tau {
        Some(tau) => Some(window_report(&analysis, &pointwise, tau, &v_grid[0])?),
        None => None,
    };
    let conditions = ConditionReport {
        singular: singular.clone(),
        integral_sonc: Some(integral),
        monotonicity: Some(monotonicity),
        pointwise_sonc: Some(pointwise),
    };
    let verdict = conditions.verdict();
    if g.emit_gnuplot {
        if let Some(w) = &window {
            let header = vec![
                format!("window scan at tau = {}", w.tau),
                format!("target {} stderr {}", w.target.mean, w.target.stderr),
                "alpha fixed fixed_gap moving moving_gap".to_string(),
            ];
            let rows: Vec<Vec<f64>> = w
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.alpha,
                        r.fixed.mean,
                        r.fixed_gap.mean,
                        r.moving.mean,
                        r.moving_gap.mean,
                    ]
                })
                .collect();
            run.sink.gnuplot("window.dat", &header, &rows)?;
        }
    }
    let report = CheckReport {
        singular,
        conditions: Some(conditions),
        window,
        verdict,
    };
    run.sink.json("check", &provenance, &report)?;
    Ok(if verdict == Verdict::Violated {
        EXIT_VIOLATED
    } else {
        0
    })
}

pub fn expand(g: &GlobalArgs, a: &ExpandArgs) -> Result<u8, CliError> {
    let run = load(g)?;
    let spec = &run.setup.spec;
    let bundle = run.bundle(g)?;
    let eps = match &a.eps {
        Some(raw) => parse_list(raw, "--eps")?,
        None => default_eps(),
    };
    let analysis = Analysis::new(spec, &run.setup.reference, &bundle)?;
    let report: ExpansionReport<f64> =
        expansion_scan(&analysis, &run.setup.candidate, &eps, run.tol)?;
    run.sink.write("expand.csv", |w| report.write_csv(w))?;
    if g.emit_gnuplot {
        let mut columns = String::from("eps");
        for v in &report.vertices {
            columns.push_str(&format!(" delta_j_v{0} abs_remainder_v{0}", v.vertex));
        }
        let header = vec![
            format!(
                "expansion of the cost along the candidate, fit degree {}",
                report.fit_degree
            ),
            columns,
        ];
        let rows: Vec<Vec<f64>> = eps
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let mut row = vec![e];
                for v in &report.vertices {
                    row.push(v.delta_j[j].mean);
                    row.push(v.remainder[j].abs());
                }
                row
            })
            .collect();
        run.sink.gnuplot("expand.dat", &header, &rows)?;
    }
    run.sink
        .json("expand", &Provenance::new(spec, &bundle), &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct ExampleReport {
    validation: ValidationReport,
    /// Largest `|P₁| + |Q₁| + |P₂ − 1| + |Q₂|` over paths, nodes and scenarios.
    adjoint_deviation: f64,
    /// Largest `|𝕊 − 1|`.
    s_deviation: f64,
    singular: SingularReport<f64>,
    reference_cost: CostTable<f64>,
    candidate_cost: CostTable<f64>,
    pointwise: PointwiseReport<f64>,
    ruled_out: bool,
    conclusion: String,
}

fn max_deviation(panel: &robust_sonc::simulate::Panel<f64>, target: f64) -> f64 {
    panel
        .as_slice()
        .iter()
        .fold(0.0f64, |acc, &v| acc.max((v - target).abs()))
}

/// The two-scenario walkthrough, always in analytic mode with declared-zero
/// Malliavin terms.
pub fn example(g: &GlobalArgs) -> Result<u8, CliError> {
    let mut setup =
        builtin::<f64>("example").ok_or_else(|| CliError::Usage("no example".into()))?;
    if let Some(steps) = g.steps {
        setup.spec.grid = TimeGrid::new(setup.spec.grid.horizon, steps)?;
    }
    setup.spec.adjoint_mode = AdjointMode::Analytic;
    setup.spec.malliavin_mode = MalliavinMode::DeclaredZero;
    let tol = parse_tolerance(&g.tol)?;
    let sink = Sink::new(&g.out)?;
    let spec = &setup.spec;
    let validation = spec.validate();
    if !validation.is_valid() {
        return Err(CliError::Usage(describe(&validation)));
    }
    let bundle = generate_paths(g.seed, g.paths, &spec.grid)?;
    let analysis = Analysis::new(spec, &setup.reference, &bundle)?;
    let mut adjoint_deviation = 0.0f64;
    let mut s_deviation = 0.0f64;
    for sa in &analysis.scenarios {
        let adj = &sa.adjoint;
        adjoint_deviation = adjoint_deviation
            .max(max_deviation(&adj.p1, 0.0))
            .max(max_deviation(&adj.q1, 0.0))
            .max(max_deviation(&adj.p2, 1.0))
            .max(max_deviation(&adj.q2, 0.0));
        s_deviation = s_deviation.max(max_deviation(&sa.s.s, 1.0));
    }
    let singular = check_singular(&analysis, tol)?;
    if singular.verdict == Verdict::Violated {
        return Err(Error::NotSingular(singular.failure().unwrap_or_default()).into());
    }
    let reference_cost = analysis.costs.clone();
    let candidate_cost = robust_cost(spec, &setup.candidate, &bundle)?;
    let pointwise = pointwise_sonc(
        &analysis,
        &default_tau_grid(spec.grid.horizon),
        &[vec![1.0]],
        tol,
        false,
    )?;
    let ruled_out = pointwise.verdict == Verdict::Violated;
    let conclusion = if ruled_out {
        "ū is ruled out: it is not an optimal control"
    } else {
        "ū is not ruled out on this grid"
    };
    let c = &candidate_cost;
    println!("{:<34} {:>14} {:>12}", "quantity", "value", "stderr");
    let rows = [
        ("max |adjoint − (0, 0, 1, 0)|", adjoint_deviation, 0.0),
        ("max |S − 1|", s_deviation, 0.0),
        ("max |∫∂_uH dλ|", singular.first_order_max, 0.0),
        (
            "max |∫(∂_uuH + ∂_uσᵀP₂∂_uσ) dλ|",
            singular.second_order_max,
            0.0,
        ),
        (
            "J(ū), ū ≡ 0",
            reference_cost.robust_value,
            reference_cost.stderr,
        ),
        ("J(u), u ≡ 1", c.robust_value, c.stderr),
        (
            "pointwise LHS at v = 1",
            pointwise.statistic,
            pointwise.statistic_stderr,
        ),
    ];
    for (name, value, se) in rows {
        println!("{name:<34} {value:>14.6} {se:>12.2e}");
    }
    let argmax: Vec<String> = c
        .argmax_vertices
        .iter()
        .map(|&v| format!("{:?}", spec.measures.vertices[v]))
        .collect();
    println!("argmax measures at u ≡ 1: {}", argmax.join(", "));
    println!("{conclusion}");
    let report = ExampleReport {
        validation,
        adjoint_deviation,
        s_deviation,
        singular,
        reference_cost,
        candidate_cost,
        pointwise,
        ruled_out,
        conclusion: conclusion.to_string(),
    };
    sink.json("example", &Provenance::new(spec, &bundle), &report)?;
    Ok(0)
}

#[derive(Serialize)]
struct ValidateReport {
    validation: ValidationReport,
    consistency: Vec<ConsistencyReport>,
    /// Scenarios whose derivatives cannot be probed, with the reason.
    skipped: Vec<(usize, String)>,
    valid: bool,
}

pub fn validate(g: &GlobalArgs) -> Result<u8, CliError> {
    let mut setup = load_setup(g)?;
    apply_overrides(g, &mut setup)?;
    let sink = Sink::new(&g.out)?;
    let spec = &setup.spec;
    let validation = spec.validate();
    let mut consistency = Vec::new();
    let mut skipped = Vec::new();
    if validation.is_valid() {
        for s in 0..spec.scenarios.len() {
            match fd_consistency(spec, s, FD_PROBES, FD_TOL) {
                Ok(r) => consistency.push(r),
                Err(e @ Error::FiniteDifferenceOnly(_)) => skipped.push((s, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let valid = validation.is_valid() && consistency.iter().all(|r| r.passed);
    for v in &validation.violations {
        eprintln!("violation: {v}");
    }
    for r in consistency.iter().filter(|r| !r.passed) {
        eprintln!(
            "scenario {}: finite differences disagree (relative error {:e})",
            r.scenario, r.max_rel_error
        );
    }
    let report = ValidateReport {
        validation,
        consistency,
        skipped,
        valid,
    };
    sink.json(
        "validate",
        &Provenance::for_spec(spec, g.seed, g.paths),
        &report,
    )?;
    Ok(if valid { 0 } else { EXIT_USAGE })
}
