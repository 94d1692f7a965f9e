//! One function per subcommand. Each writes its outputs as it goes, so a
//! failure leaves the completed files in place.

use std::collections::BTreeMap;
use std::time::Instant;

use fracbubble::bubble::{
    asymptotic_profile, back_transform, machine_operator, AnsatzConfig, MeshOptions, ReductionSystem,
};
use fracbubble::domain::{GradedMeshSpec, Grid, LineGrid};
use fracbubble::energy::{classify_stability, find_critical, Objective, ReducedEnergy};
use fracbubble::green::{closed_form_source, GreenSource, GreenTable};
use fracbubble::operators::{build_operator, DiscreteOperator};
use fracbubble::verify::{run_all, VerifySettings};
use fracbubble::{ConstantSet, DomainSpec, Error, OperatorKind, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{constants, hashes_in, Output};

/// Largest uniform lattice per side for dense two-dimensional operators.
const MAX_PLANE_CELLS: usize = 64;

pub struct Outcome {
    /// False when `verify` found a failing criterion.
    pub accepted: bool,
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn new() -> Self {
        Timer(BTreeMap::new(), Instant::now())
    }

    fn lap(&mut self, label: &str) {
        self.0.insert(label.to_string(), self.1.elapsed().as_secs_f64());
        self.1 = Instant::now();
    }
}

fn resolve(cfg: &ExperimentConfig) -> Result<ConstantSet> {
    constants(&cfg.params()?, cfg.tolerances.constants)
}

pub fn cmd_constants(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    let c = resolve(cfg)?;
    t.lap("resolve");
    let r = &c.residuals;
    let worst = [r.b, r.a, r.alpha, r.omega, r.gamma, r.energy_c, r.iota, r.d_half]
        .into_iter()
        .fold(0.0, f64::max);
    out.write_json(
        "constants.json",
        json!({
            "params": cfg.params()?,
            "constants": c,
            "max_residual": worst,
            "residuals_within_tol": worst < cfg.tolerances.constants.max(1e-6),
        }),
    )?;
    out.write_manifest("constants", cfg, &t.0)?;
    Ok(Outcome { accepted: true })
}

/// Center of the bounding box and the lower end of its last coordinate.
fn frame(domain: &DomainSpec) -> (Vec<f64>, f64) {
    let (lo, hi) = domain.bounding_box();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    (center, lo[lo.len() - 1])
}

/// Points from the center toward the boundary along the last coordinate,
/// at fractions `0 ..= 0.9` of the way.
fn radial_points(domain: &DomainSpec, count: usize) -> Vec<Vec<f64>> {
    let (center, low) = frame(domain);
    let last = center.len() - 1;
    (0..count)
        .map(|k| {
            let f = 0.9 * k as f64 / (count - 1) as f64;
            let mut x = center.clone();
            x[last] = center[last] - f * (center[last] - low);
            x
        })
        .collect()
}

/// Points spread over the middle 80% of the domain along the last coordinate.
fn spread_points(domain: &DomainSpec, count: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let (center, _) = frame(domain);
    let last = center.len() - 1;
    (0..count)
        .map(|k| {
            let f = 0.1 + 0.8 * k as f64 / (count - 1) as f64;
            let mut x = center.clone();
            x[last] = lo[last] + f * (hi[last] - lo[last]);
            x
        })
        .collect()
}

/// Operator for Green tables: graded meshes anchored at the samples for
/// restricted intervals, uniform grids otherwise.
fn table_operator(cfg: &ExperimentConfig, samples: &[Vec<f64>]) -> Result<DiscreteOperator> {
    let d = &cfg.domain;
    let g = &cfg.grid;
    let params = cfg.params()?;
    let grid = match (cfg.problem.operator, d.interval_bounds()) {
        (OperatorKind::Restricted, Some((a, b))) => {
            let len = b - a;
            let mut spec = GradedMeshSpec::new(a, b, g.boundary * len, g.growth, g.coarse * len);
            for x in samples {
                spec = spec.with_anchor(x[0], g.anchor * len);
            }
            Grid::Line(LineGrid::new(spec.build()?, true)?)
        }
        _ => {
            if d.dim() == 2 && g.cells > MAX_PLANE_CELLS {
                return Err(Error::Config(format!(
                    "two-dimensional operators are dense; use at most {MAX_PLANE_CELLS} cells per side (got {})",
                    g.cells
                )));
            }
            Grid::uniform(d, g.cells)?
        }
    };
    build_operator(d, &params, grid, cfg.problem.operator)
}

pub fn cmd_green(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    let c = resolve(cfg)?;
    let samples = spread_points(&cfg.domain, cfg.scan.samples);
    let op = table_operator(cfg, &samples)?;
    t.lap("operator");
    let table = GreenTable::from_operator(&op, &c, samples)?;
    t.lap("table");
    let preamble = out.preamble();
    table.write_rows(out.raw("green.csv")?, Some(&preamble))?;
    out.write_json("green.json", table.header())?;
    out.write_manifest("green", cfg, &t.0)?;
    Ok(Outcome { accepted: true })
}

pub fn cmd_robin(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    let c = resolve(cfg)?;
    let samples = radial_points(&cfg.domain, cfg.scan.samples);
    let op = table_operator(cfg, &samples)?;
    t.lap("operator");
    let table = GreenTable::from_operator(&op, &c, samples.clone())?;
    t.lap("table");
    let exact = closed_form_source(&cfg.domain, cfg.problem.operator, &c).ok();
    let n = cfg.problem.n;
    let mut header: Vec<String> = (0..n).map(|j| format!("xi{j}")).collect();
    header.extend(["dist".into(), "robin".into(), "robin_closed_form".into()]);
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .zip(&table.robin)
        .map(|(x, r)| {
            let mut row = x.clone();
            row.push(cfg.domain.boundary_distance(x));
            row.push(*r);
            row.push(exact.as_ref().map_or(f64::NAN, |e| e.robin(x)));
            row
        })
        .collect();
    out.write_table("robin.csv", &header, &rows)?;
    let monotone = table.robin.windows(2).all(|w| w[1] > w[0]);
    out.write_json(
        "robin.json",
        json!({ "kind": cfg.problem.operator, "method": table.method, "monotone": monotone, "rows": rows.len() }),
    )?;
    out.write_manifest("robin", cfg, &t.0)?;
    Ok(Outcome { accepted: true })
}

fn source(cfg: &ExperimentConfig, c: &ConstantSet) -> Result<Box<dyn GreenSource>> {
    closed_form_source(&cfg.domain, cfg.problem.operator, c)
}

fn linspace(range: [f64; 2], steps: usize) -> impl Iterator<Item = f64> {
    (0..steps).map(move |k| range[0] + (range[1] - range[0]) * k as f64 / (steps - 1) as f64)
}

pub fn cmd_psi_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    if cfg.problem.n != 1 {
        return Err(Error::Capability("the (ξ, Λ) scan is one-dimensional".into()));
    }
    let c = resolve(cfg)?;
    let src = source(cfg, &c)?;
    let e = ReducedEnergy::new(src.as_ref(), 1, cfg.problem.sign);
    let points: Vec<[f64; 2]> = linspace(cfg.scan.xi_range, cfg.scan.xi_steps)
        .flat_map(|x| linspace(cfg.scan.lambda_range, cfg.scan.lambda_steps).map(move |l| [x, l]))
        .collect();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|z| match e.evaluate(z) {
            Ok((v, g)) => vec![z[0], z[1], v, g[0], g[1]],
            Err(_) => vec![z[0], z[1], f64::NAN, f64::NAN, f64::NAN],
        })
        .collect();
    t.lap("scan");
    let header: Vec<String> = ["xi0", "Lambda", "psi", "dpsi_dxi0", "dpsi_dLambda"].map(String::from).to_vec();
    out.write_table("psi_scan.csv", &header, &rows)?;
    out.write_manifest("psi-scan", cfg, &t.0)?;
    Ok(Outcome { accepted: true })
}

pub fn cmd_find_critical(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    let c = resolve(cfg)?;
    let src = source(cfg, &c)?;
    let m = cfg.scan.seeds[0].len() / (cfg.problem.n + 1);
    let e = ReducedEnergy::new(src.as_ref(), m, cfg.problem.sign);
    let mut found = find_critical(&e, &cfg.scan.seeds, cfg.tolerances.newton);
    t.lap("search");
    let tol = &cfg.tolerances;
    let reports: Vec<Value> = found
        .points
        .iter_mut()
        .map(|cp| {
            let rep = classify_stability(&e, cp, tol.stability_mu, tol.stability_runs, tol.newton, cfg.run.seed);
            cp.stable = Some(rep.stable);
            json!(rep)
        })
        .collect();
    t.lap("stability");
    out.write_json(
        "critical.json",
        json!({ "m": m, "sign": cfg.problem.sign, "points": found.points, "failures": found.failures, "stability": reports }),
    )?;
    out.write_manifest("find-critical", cfg, &t.0)?;
    if found.points.is_empty() {
        return Err(Error::numeric("no seed converged to a critical point", f64::NAN));
    }
    Ok(Outcome { accepted: true })
}

pub fn cmd_ansatz(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut t = Timer::new();
    let mut out = Output::new(cfg)?;
    let c = resolve(cfg)?;
    let opts = MeshOptions { core: cfg.grid.core, growth: cfg.grid.ansatz_growth, ..MeshOptions::default() };
    let mut summary = Vec::new();
    let header: Vec<String> = ["x", "u", "profile"].map(String::from).to_vec();
    let mut failure = None;
    for (k, &eps) in cfg.problem.eps.iter().enumerate() {
        let params = cfg.params()?.with_eps(eps)?;
        let ac = AnsatzConfig::new(params, cfg.domain.clone(), cfg.ansatz.xi.clone(), cfg.ansatz.big_lambda.clone())?;
        if cfg.problem.operator != OperatorKind::Restricted {
            machine_operator(&ac, &c, cfg.problem.operator, &opts)?;
        }
        let solved = ReductionSystem::for_ansatz(&ac, &c, &opts, cfg.ansatz.alpha)
            .and_then(|sys| Ok((sys.solve_nonlinear(cfg.tolerances.max_iter, cfg.tolerances.fixed_point)?, sys)));
        let (sol, sys) = match solved {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        t.lap(&format!("eps{k}"));
        let v: Vec<f64> = sys.vbar.iter().zip(&sol.solution.phi).map(|(a, b)| a + b).collect();
        let (x, u) = back_transform(&ac, sys.nodes(), &v);
        let rows: Vec<Vec<f64>> = x
            .iter()
            .zip(&u)
            .map(|(xk, uk)| vec![*xk, *uk, asymptotic_profile(&ac, &c, &[*xk])])
            .collect();
        let top = u.iter().copied().fold(0.0, f64::max);
        let deviation = rows.iter().map(|r| (r[1] - r[2]).abs()).fold(0.0, f64::max) / top;
        out.write_table(&format!("ansatz_eps{k}.csv"), &header, &rows)?;
        summary.push(json!({
            "eps": eps,
            "nodes": x.len(),
            "iterations": sol.iterations,
            "contraction": sol.contraction,
            "phi_norm": sol.solution.phi_norm,
            "tilde_norm": sol.tilde_norm,
            "residual_norm": sol.residual_norm,
            "max_multiplier": sol.solution.max_multiplier(),
            "orthogonality": sol.solution.orthogonality,
            "profile_relative_deviation": deviation,
            "positive": u[1..u.len() - 1].iter().all(|v| *v > 0.0),
        }));
        out.write_json("ansatz.json", json!({ "rows": summary }))?;
    }
    out.write_manifest("ansatz", cfg, &t.0)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(Outcome { accepted: true }),
    }
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.problem;
    if p.n != 1 || (p.s - 0.3).abs() > 1e-15 {
        return Err(Error::Config(format!(
            "the acceptance suite runs at n = 1, s = 0.3 (config has n = {}, s = {})",
            p.n, p.s
        )));
    }
    let mut out = Output::new(cfg)?;
    let mixed: Vec<String> = hashes_in(&out.dir)?
        .into_iter()
        .filter(|(_, h)| *h != out.hash)
        .map(|(f, _)| f)
        .collect();
    if !mixed.is_empty() {
        return Err(Error::Config(format!(
            "{} holds outputs of a different configuration ({}); use a fresh output directory",
            out.dir.display(),
            mixed.join(", ")
        )));
    }
    let c = resolve(cfg)?;
    let mut t = Timer::new();
    let reports = run_all(&c, &VerifySettings { seed: cfg.run.seed });
    t.lap("suite");
    for r in &reports {
        println!("{}", r.line());
    }
    let accepted = reports.iter().all(|r| r.passed);
    out.write_json("verify.json", json!({ "passed": accepted, "criteria": reports }))?;
    out.write_manifest("verify", cfg, &t.0)?;
    Ok(Outcome { accepted })
}
