//! Task dispatch. Each task returns its output files, a JSON summary and the
//! invariants it asserted.

use serde::Serialize;
use serde_json::{json, Map, Value};
use twistlab_core::discretize::{assemble_oscillator, assemble_straightened, Grid1D, Grid2D};
use twistlab_core::evolution::{
    boundary_time, energy_system_integrate, evolve_and_record, fit_decay_rate, gaussian_initial,
    lambert_closed_form, linear_fit, EvolutionRecord, Schedule, Scheme,
};
use twistlab_core::inequalities::{run_suite, SuiteConfig};
use twistlab_core::report::fmt17;
use twistlab_core::spectral::{
    compute_modes, hardy_report, lambda_bounded, mu_curve, smallest_eigenpairs, stability_probe,
    stability_probe_untwisted, ModeSet,
};
use twistlab_core::TubeSpec;

use crate::config::{RunConfig, Task};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Invariant {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Invariant {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutput {
    /// File name and contents, written under the output directory.
    pub files: Vec<(String, String)>,
    pub summary: Map<String, Value>,
    pub invariants: Vec<Invariant>,
}

/// Result each task reproduces, recorded in the JSON summary.
pub fn reproduces(task: Task) -> &'static str {
    match task {
        Task::Modes => "cross-section Dirichlet modes",
        Task::MuCurve => "self-similar spectral threshold mu(s)",
        Task::Hardy => "Hardy inequality constants",
        Task::LambdaSweep => "shrinking-interval threshold lambda(I_eps)",
        Task::Evolve => "heat semigroup on the straightened tube",
        Task::Fit => "polynomial decay rate",
        Task::Oracle1d => "harmonic oscillator thresholds h and h_D",
        Task::EnergyOde => "energy inequality system and its closed form",
        Task::Inequalities => "elementary functional inequalities",
        Task::Stability => "spectral stability under attractive potentials",
    }
}

fn to_map(v: impl Serialize) -> Map<String, Value> {
    match serde_json::to_value(v).expect("serializable") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

struct Setup {
    tube: TubeSpec,
    section: Grid2D,
    modes: ModeSet,
}

fn setup(cfg: &RunConfig, section_h: f64) -> Result<Setup, CliError> {
    let tube = cfg.tube_spec()?;
    let section = Grid2D::for_section(tube.section, section_h)?;
    let modes = compute_modes(&section, &cfg.eig_options())?;
    Ok(Setup { tube, section, modes })
}

pub fn run_task(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    match cfg.task {
        Task::Modes => modes(cfg),
        Task::MuCurve => mu(cfg),
        Task::Hardy => hardy(cfg),
        Task::LambdaSweep => lambda_sweep(cfg),
        Task::Evolve => evolve(cfg, false),
        Task::Fit => evolve(cfg, true),
        Task::Oracle1d => oracle_1d(cfg),
        Task::EnergyOde => energy_ode(cfg),
        Task::Inequalities => inequalities(cfg),
        Task::Stability => stability(cfg),
    }
}

fn modes(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let s = setup(cfg, cfg.grid.section_h)?;
    let mut csv = String::from("x2,x3,j1,dtau_j1\n");
    for ((p, j), t) in s.section.coords().iter().zip(&s.modes.j1).zip(&s.modes.dtau_j1) {
        csv.push_str(&format!("{},{},{},{}\n", fmt17(p.0), fmt17(p.1), fmt17(*j), fmt17(*t)));
    }
    let orth = s.modes.orthogonality(&s.section);
    let summary = to_map(json!({
        "nodes": s.section.n(),
        "e1": s.modes.e1,
        "e2": s.modes.e2,
        "a": s.tube.section.a(),
        "dtau_j1_norm": s.modes.dtau_norm_sq(&s.section).sqrt(),
        "orthogonality": orth,
        "residual_e1": s.modes.residuals[0],
        "residual_e2": s.modes.residuals[1],
    }));
    Ok(TaskOutput {
        files: vec![("modes.csv".into(), csv)],
        summary,
        invariants: vec![
            Invariant::new("e1_below_e2", s.modes.e1 < s.modes.e2, format!("{} < {}", s.modes.e1, s.modes.e2)),
            Invariant::new("j1_dtau_orthogonal", orth.abs() < 1e-8, format!("{orth:e}")),
        ],
    })
}

fn mu(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let st = setup(cfg, cfg.grid.section_h)?;
    let opts = cfg.eig_options();
    let s_values = p.s.clone().unwrap_or_else(|| vec![0.0, 2.0, 4.0, 6.0, 8.0]);
    let policy = cfg.axial_policy(p.y_half_length.unwrap_or(cfg.tube.half_length));
    let curve = mu_curve(&st.tube, &s_values, &policy, &st.section, &st.modes, &opts)?;
    let first = curve.samples[0];
    let last = *curve.samples.last().expect("nonempty s grid");
    let mu_min = curve.samples.iter().map(|q| q.mu).fold(f64::INFINITY, f64::min);
    let mut summary = to_map(json!({
        "samples": curve.samples.len(),
        "mu_min": mu_min,
        "mu_first": first.mu,
        "mu_last": last.mu,
        "s_last": last.s,
        "node_amp_first": first.node_amp,
        "node_amp_last": last.node_amp,
        "under_resolved": curve.samples.iter().any(|q| q.under_resolved),
    }));
    if p.l_doubling == Some(true) {
        let d = mu_curve(&st.tube, &[last.s], &policy.doubled(), &st.section, &st.modes, &opts)?;
        summary.insert("mu_last_l_doubled".into(), json!(d.samples[0].mu));
        summary.insert("l_doubling_change".into(), json!((d.samples[0].mu - last.mu).abs()));
    }
    if p.h_halving == Some(true) {
        let fine = setup(cfg, 0.5 * cfg.grid.section_h)?;
        let d = mu_curve(&fine.tube, &[last.s], &policy, &fine.section, &fine.modes, &opts)?;
        summary.insert("mu_last_h_halved".into(), json!(d.samples[0].mu));
        summary.insert("h_halving_change".into(), json!((d.samples[0].mu - last.mu).abs()));
    }
    Ok(TaskOutput {
        files: vec![("mu_curve.csv".into(), curve.csv())],
        summary,
        invariants: vec![Invariant::new(
            "mu_at_least_quarter",
            mu_min >= 0.25 - 5e-3,
            format!("min mu = {mu_min}"),
        )],
    })
}

fn interval(cfg: &RunConfig) -> (f64, f64) {
    cfg.params.interval.map_or((-1.0, 1.0), |[a, b]| (a, b))
}

fn hardy(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let st = setup(cfg, cfg.grid.section_h)?;
    let opts = cfg.eig_options();
    let policy = cfg.axial_policy(cfg.tube.half_length);
    let report = hardy_report(
        &st.tube,
        interval(cfg),
        p.interval_cells.unwrap_or(64),
        &policy,
        &st.section,
        &st.modes,
        p.l_doubling == Some(true),
        &opts,
    )?;
    let mut summary = to_map(report);
    if let Some(sens) = report.l_sensitivity() {
        summary.insert("l_sensitivity".into(), json!(sens));
    }
    let tol = 1e-6;
    Ok(TaskOutput {
        files: vec![("hardy.json".into(), serde_json::to_string_pretty(&report)? + "\n")],
        summary,
        invariants: vec![
            Invariant::new(
                "certified_below_variational",
                report.ch_certified >= 0.0 && report.ch_certified <= report.ch_variational + tol,
                format!("0 <= {} <= {}", report.ch_certified, report.ch_variational),
            ),
            Invariant::new(
                "certified_at_most_half",
                report.ch_certified <= 0.5,
                format!("{}", report.ch_certified),
            ),
            Invariant::new(
                "variational_at_most_half",
                report.ch_variational <= 0.5 + 5e-2,
                format!("{}", report.ch_variational),
            ),
        ],
    })
}

fn lambda_sweep(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let st = setup(cfg, cfg.grid.section_h)?;
    let opts = cfg.eig_options();
    let eps = p.eps.clone().unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.125]);
    let cells = p.interval_cells.unwrap_or(64);
    let mut csv = String::from("eps,lambda,raw,residual\n");
    let mut values = Vec::new();
    for &e in &eps {
        let l = lambda_bounded(&st.tube, (-e, e), cells, &st.section, &st.modes, &opts)?;
        csv.push_str(&format!("{},{},{},{}\n", fmt17(e), fmt17(l.value), fmt17(l.raw), fmt17(l.residual)));
        values.push(l);
    }
    let decreasing = values.windows(2).all(|w| w[1].value < w[0].value);
    let first = values[0].value;
    let last = values[values.len() - 1].value;
    let min_raw = values.iter().map(|l| l.raw).fold(f64::INFINITY, f64::min);
    Ok(TaskOutput {
        files: vec![("lambda_sweep.csv".into(), csv)],
        summary: to_map(json!({
            "lambda_first": first,
            "lambda_last": last,
            "ratio_last_first": last / first,
            "strictly_decreasing": decreasing,
        })),
        invariants: vec![Invariant::new(
            "lambda_nonnegative",
            min_raw >= -twistlab_core::spectral::CLAMP_BAND,
            format!("min raw = {min_raw:e}"),
        )],
    })
}

fn evolve(cfg: &RunConfig, fit: bool) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let st = setup(cfg, cfg.grid.section_h)?;
    let axial = cfg.axial_policy(cfg.tube.half_length).physical(&st.tube.twist)?;
    let form = assemble_straightened(&st.tube, &axial, &st.section)?.shifted(st.modes.e1);
    let u0 = gaussian_initial(&form.layout, p.gaussian_n.unwrap_or(6.0), &st.modes.j1);
    let t_end = p.t_end.unwrap_or(5.0);
    let schedule = match p.rel {
        Some(rel) => Schedule::Geometric {
            dt0: p.dt.unwrap_or(0.01),
            rel,
            t_end,
        },
        None => Schedule::Uniform {
            dt: p.dt.unwrap_or(0.05),
            t_end,
        },
    };
    let scheme = p.scheme.unwrap_or(Scheme::ImplicitEuler);
    let rec = evolve_and_record(&form, &u0, schedule, scheme, p.record_every.unwrap_or(1))?;
    let mut files = vec![("norms.csv".to_string(), rec.csv())];
    let mut summary = evolution_summary(&rec, form.n());
    let mut invariants = evolution_invariants(&rec, scheme);
    if fit {
        let t_bc = boundary_time(st.tube.half_length, st.tube.twist.support_radius());
        let [lo, hi] = p.window.unwrap_or([5.0, 50.0f64.min(t_bc)]);
        let f = fit_decay_rate(&rec.series(), lo, hi, Some(t_bc))?;
        files.push(("fit.json".into(), serde_json::to_string_pretty(&f)? + "\n"));
        summary.insert("gamma".into(), json!(f.gamma));
        summary.insert("r2".into(), json!(f.r2));
        summary.insert("t_bc".into(), json!(t_bc));
        invariants.push(Invariant::new("fit_accepted", f.accepted, format!("R^2 = {}", f.r2)));
    }
    Ok(TaskOutput {
        files,
        summary,
        invariants,
    })
}

fn evolution_summary(rec: &EvolutionRecord, unknowns: usize) -> Map<String, Value> {
    let first = rec.samples[0];
    let last = *rec.samples.last().expect("initial sample");
    to_map(json!({
        "unknowns": unknowns,
        "steps": rec.steps,
        "t_end": last.t,
        "max_growth": rec.max_growth,
        "min_sign_ratio": rec.min_sign_ratio,
        "max_residual": rec.max_residual,
        "norm_l2_initial": first.norm_l2,
        "norm_l2_final": last.norm_l2,
        "norm_k_initial": first.norm_k,
        "norm_k_final": last.norm_k,
    }))
}

/// Checks shared by every evolution run.
pub fn evolution_invariants(rec: &EvolutionRecord, scheme: Scheme) -> Vec<Invariant> {
    let m0 = rec.samples[0].norm_mixed1;
    let mixed_ok = rec.samples.iter().all(|q| q.norm_mixed1 <= m0 * (1.0 + 1e-9));
    let chain = rec
        .samples
        .iter()
        .map(|q| q.norm_mixed1.powi(2) / (std::f64::consts::PI * q.norm_rhoinv.powi(2)))
        .fold(0.0, f64::max);
    let mut out = vec![
        Invariant::new("non_expansive", rec.non_expansive(), format!("max growth {}", rec.max_growth)),
        Invariant::new("mixed_norm_non_increasing", mixed_ok, format!("initial {m0}")),
        Invariant::new("mixed_norm_rho_bound", chain <= 1.0, format!("max ratio {chain}")),
    ];
    if scheme == Scheme::ImplicitEuler {
        out.push(Invariant::new(
            "positivity",
            rec.positive(),
            format!("min sign ratio {:e}", rec.min_sign_ratio),
        ));
    }
    out
}

fn oracle_1d(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let half = p.y_half_length.unwrap_or(20.0);
    let grid = Grid1D::uniform(-half, half, p.cells.unwrap_or(4000))?;
    let opts = cfg.eig_options();
    let h = smallest_eigenpairs(&assemble_oscillator(&grid, false)?, 2, &opts)?;
    let hd = smallest_eigenpairs(&assemble_oscillator(&grid, true)?, 1, &opts)?;
    let out = json!({
        "e1": h[0].value,
        "e2": h[1].value,
        "e1_dirichlet": hd[0].value,
        "residual": h[0].residual.max(h[1].residual).max(hd[0].residual),
    });
    Ok(TaskOutput {
        files: vec![("oracle_1d.json".into(), serde_json::to_string_pretty(&out)? + "\n")],
        summary: to_map(&out),
        invariants: vec![Invariant::new(
            "dirichlet_raises_threshold",
            hd[0].value > h[0].value,
            format!("{} > {}", hd[0].value, h[0].value),
        )],
    })
}

fn energy_ode(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let (c, a0, b0) = (p.c_h.unwrap_or(0.3), p.a0.unwrap_or(1.0), p.b0.unwrap_or(2.0));
    if !(c > 0.0 && c <= 1.0) {
        return Err(CliError::ConfigInvalid(format!("params.c_h = {c} outside (0, 1]")));
    }
    let traj = energy_system_integrate(c, a0, b0, p.dt.unwrap_or(0.01), p.t_end.unwrap_or(50.0))?;
    let mut csv = String::from("t,a,b,a_exact,b_exact\n");
    let mut max_rel: f64 = 0.0;
    let mut ordered = true;
    let every = p.record_every.unwrap_or(1).max(1);
    for (k, q) in traj.iter().enumerate() {
        let ex = lambert_closed_form(c, a0, b0, q.t)?;
        max_rel = max_rel.max(((q.a - ex.a) / ex.a).abs()).max(((q.b - ex.b) / ex.b).abs());
        ordered &= q.a <= q.b;
        if k % every == 0 || k + 1 == traj.len() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(q.t),
                fmt17(q.a),
                fmt17(q.b),
                fmt17(ex.a),
                fmt17(ex.b)
            ));
        }
    }
    let t_last = traj.last().map_or(0.0, |q| q.t);
    let mut summary = to_map(json!({ "max_rel_err": max_rel, "t_end": t_last }));
    if t_last >= 10.0 {
        let tail: Vec<(f64, f64)> = traj
            .iter()
            .filter(|q| q.t >= 0.1 * t_last)
            .map(|q| (q.t.ln(), q.a.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
        summary.insert("log_slope".into(), json!(linear_fit(&x, &y).0));
    }
    Ok(TaskOutput {
        files: vec![("energy.csv".into(), csv)],
        summary,
        invariants: vec![Invariant::new("a_below_b", ordered, String::new())],
    })
}

fn inequalities(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let base = SuiteConfig::default();
    let half = cfg.tube.half_length;
    let suite = SuiteConfig {
        section: cfg.tube.section,
        section_h: cfg.grid.section_h,
        half_length: half,
        axial_cells: (2.0 * half / cfg.grid.h_coarse).ceil() as usize,
        interval: interval(cfg),
        first_seed: cfg.seed,
        seeds: p.seeds.unwrap_or(base.seeds),
        ..base
    };
    let reports = run_suite(&suite, &cfg.eig_options())?;
    let tol = 1e-9;
    let mut files = Vec::new();
    let mut summary = Map::new();
    let mut invariants = Vec::new();
    for r in &reports {
        let name = r.check.name();
        files.push((format!("ineq_{name}.csv"), r.csv()));
        summary.insert(format!("{name}_worst_relative"), json!(r.worst_relative()));
        invariants.push(Invariant::new(
            name,
            r.passed(tol),
            format!("worst relative margin {:e} over {} seeds", r.worst_relative(), r.results.len()),
        ));
    }
    Ok(TaskOutput {
        files,
        summary,
        invariants,
    })
}

fn stability(cfg: &RunConfig) -> Result<TaskOutput, CliError> {
    let p = &cfg.params;
    let opts = cfg.eig_options();
    let eps = p.eps_pot.clone().unwrap_or_else(|| vec![0.0, 0.5]);
    let tube = cfg.tube_spec()?;
    let mut results = Vec::new();
    if tube.is_twisted() {
        let st = setup(cfg, cfg.grid.section_h)?;
        let axial = cfg.axial_policy(tube.half_length).physical(&tube.twist)?;
        for &e in &eps {
            results.push(stability_probe(&tube, e, &axial, &st.section, &st.modes, &opts)?);
        }
    } else {
        let cells = p
            .cells
            .unwrap_or((2.0 * tube.half_length / cfg.grid.h_coarse).ceil() as usize);
        for &e in &eps {
            results.push(stability_probe_untwisted(e, tube.half_length, cells, &opts)?);
        }
    }
    let mut csv = String::from("eps_pot,value,residual,reduced_1d\n");
    for r in &results {
        csv.push_str(&format!("{},{},{},{}\n", fmt17(r.eps), fmt17(r.value), fmt17(r.residual), r.reduced_1d));
    }
    let mut order: Vec<_> = results.iter().collect();
    order.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let monotone = order.windows(2).all(|w| w[0].eps == w[1].eps || w[1].value < w[0].value);
    let mut summary = Map::new();
    for r in &results {
        summary.insert(format!("value_eps_{}", r.eps), json!(r.value));
    }
    Ok(TaskOutput {
        files: vec![("stability.csv".into(), csv)],
        summary,
        invariants: vec![Invariant::new("potential_lowers_bottom", monotone, String::new())],
    })
}
