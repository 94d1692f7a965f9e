//! Experiment configuration read from TOML. Every section is optional; the
//! defaults reproduce the desk setup (`n = 1`, `s = 0.3` on `(-1, 1)`).

use std::path::{Path, PathBuf};

use fracbubble::domain::DomainSpec;
use fracbubble::operators::OperatorKind;
use fracbubble::{Criticality, Error, FracParams, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub domain: DomainSpec,
    pub ansatz: Ansatz,
    pub scan: Scan,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub run: Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem {
    pub n: usize,
    pub s: f64,
    pub sign: Criticality,
    pub operator: OperatorKind,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ansatz {
    pub xi: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    pub big_lambda: Vec<f64>,
    /// Weight exponent of the norms, in `(2s, 4s)`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scan {
    pub xi_range: [f64; 2],
    pub xi_steps: usize,
    pub lambda_range: [f64; 2],
    pub lambda_steps: usize,
    /// Source points for Green tables and Robin profiles.
    pub samples: usize,
    /// Starting points `(ξ_1, .., ξ_m, Λ_1, .., Λ_m)` for the critical-point search.
    pub seeds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Cells of uniform grids (spectral operators, lattices).
    pub cells: usize,
    /// Graded meshes for Green functions, relative to the domain length.
    pub boundary: f64,
    pub growth: f64,
    pub coarse: f64,
    pub anchor: f64,
    /// Graded meshes on the dilated domain, relative to each bubble rate.
    pub core: f64,
    pub ansatz_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub constants: f64,
    pub newton: f64,
    pub fixed_point: f64,
    pub max_iter: usize,
    pub stability_mu: f64,
    pub stability_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Run {
    pub output: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::default(),
            domain: DomainSpec::Interval { a: -1.0, b: 1.0 },
            ansatz: Ansatz::default(),
            scan: Scan::default(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            run: Run::default(),
        }
    }
}

impl Default for Problem {
    fn default() -> Self {
        Problem {
            n: 1,
            s: 0.3,
            sign: Criticality::Subcritical,
            operator: OperatorKind::Restricted,
            eps: vec![0.04, 0.02, 0.01, 0.005],
        }
    }
}

impl Default for Ansatz {
    fn default() -> Self {
        Ansatz { xi: vec![vec![0.0]], big_lambda: vec![1.647_111_574_061_036], alpha: 0.8 }
    }
}

impl Default for Scan {
    fn default() -> Self {
        Scan {
            xi_range: [-0.8, 0.8],
            xi_steps: 17,
            lambda_range: [0.5, 4.0],
            lambda_steps: 15,
            samples: 9,
            seeds: vec![vec![0.4, 1.0], vec![-0.5, 2.5], vec![0.1, 0.6]],
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cells: 400,
            boundary: 1e-4,
            growth: 0.06,
            coarse: 0.01,
            anchor: 1e-3,
            core: 0.03,
            ansatz_growth: 0.05,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            constants: 1e-10,
            newton: 1e-10,
            fixed_point: 1e-10,
            max_iter: 50,
            stability_mu: 1e-3,
            stability_runs: 50,
        }
    }
}

impl Default for Run {
    fn default() -> Self {
        Run { output: PathBuf::from("out"), seed: 20240611, threads: 0 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.run.output = out.clone();
        }
        if let Some(t) = overrides.threads {
            cfg.run.threads = t;
        }
        if let Some(seed) = overrides.seed {
            cfg.run.seed = seed;
        }
        if let Some(tol) = overrides.tol {
            cfg.tolerances.constants = tol;
            cfg.tolerances.newton = tol;
            cfg.tolerances.fixed_point = tol;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parameters at `eps = 0`.
    pub fn params(&self) -> Result<FracParams> {
        FracParams::new(self.problem.n, self.problem.s, self.problem.sign, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        self.params()?;
        for &eps in &p.eps {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("every ε must be positive, got {eps}")));
            }
            FracParams::new(p.n, p.s, p.sign, eps)?;
        }
        self.domain.validate()?;
        if self.domain.dim() != p.n {
            return Err(Error::Config(format!(
                "domain dimension {} does not match n = {}",
                self.domain.dim(),
                p.n
            )));
        }
        if p.operator == OperatorKind::WholeSpace {
            return Err(Error::Config("experiments need a bounded domain; operator must be spectral or restricted".into()));
        }
        let a = &self.ansatz;
        if a.xi.len() != a.big_lambda.len() || a.xi.is_empty() {
            return Err(Error::Config(format!(
                "ansatz needs as many Λ values as points (m = {}, {} values)",
                a.xi.len(),
                a.big_lambda.len()
            )));
        }
        for x in &a.xi {
            if x.len() != p.n || !self.domain.contains(x) {
                return Err(Error::Config(format!("ansatz point {x:?} is not inside the domain")));
            }
        }
        if a.big_lambda.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("every Λ must be positive".into()));
        }
        if !(a.alpha > 2.0 * p.s && a.alpha < 4.0 * p.s) {
            return Err(Error::Config(format!("alpha = {} must lie in (2s, 4s)", a.alpha)));
        }
        let sc = &self.scan;
        if !(sc.xi_range[0] < sc.xi_range[1]) || !(0.0 < sc.lambda_range[0] && sc.lambda_range[0] < sc.lambda_range[1]) {
            return Err(Error::Config("scan ranges must be increasing with positive Λ".into()));
        }
        if sc.xi_steps < 2 || sc.lambda_steps < 2 || sc.samples < 2 {
            return Err(Error::Config("scans need at least two steps and two samples".into()));
        }
        let width = p.n + 1;
        if sc.seeds.iter().any(|z| z.is_empty() || z.len() % width != 0 || z.len() != sc.seeds[0].len()) {
            return Err(Error::Config(format!("seeds must all have the same length, a multiple of n + 1 = {width}")));
        }
        let g = &self.grid;
        if g.cells < 4 || [g.boundary, g.growth, g.coarse, g.anchor, g.core, g.ansatz_growth].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("grid sizes must be positive and cells >= 4".into()));
        }
        let t = &self.tolerances;
        if [t.constants, t.newton, t.fixed_point, t.stability_mu].iter().any(|v| !(*v > 0.0)) || t.max_iter == 0 {
            return Err(Error::Config("tolerances must be positive and max_iter >= 1".into()));
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }
}
