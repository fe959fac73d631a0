//! JSON run descriptors and their execution.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use agfem_core::amr::{CriterionKind, ProblemSetup, DEFAULT_MAX_ITERS};
use agfem_core::experiments::{
    domain, eta0_sweep, partition_check, run_converge, sweep_cut, sweep_table, BenchmarkId,
    ConvergeConfig, Eta0SweepConfig, GeometryId, PartitionCheckConfig, SweepConfig, ETA0_VALUES,
};
use agfem_core::io::{vtk_string, write_text, CsvTable};
use agfem_core::{Error, RigidTransform, SpaceKind, TauPolicy, WeakFormConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Converge,
    SweepCut,
    PartitionCheck,
    Eta0Sweep,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Converge => "converge",
            Experiment::SweepCut => "sweep-cut",
            Experiment::PartitionCheck => "partition-check",
            Experiment::Eta0Sweep => "eta0-sweep",
        }
    }
}

/// One experiment. Missing fields take the defaults of [`RunDescriptor::new`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunDescriptor {
    pub experiment: Experiment,
    pub geometry: GeometryId,
    pub transform: RigidTransform,
    pub benchmark: BenchmarkId,
    pub space: SpaceKind,
    pub criterion: CriterionKind,
    pub eta0: f64,
    /// Penalty constant; `None` picks 25 for the aggregated and 2 for the
    /// standard space.
    pub beta: Option<f64>,
    /// Penalty of the standard space in sweeps.
    pub beta_std: f64,
    /// Decreasing absolute energy-error targets of an adaptive study.
    pub gammas: Vec<f64>,
    /// Uniform levels; when non-empty `converge` ignores `gammas`.
    pub levels: Vec<u32>,
    /// Initial mesh level of adaptive runs and the sweep mesh level.
    pub level: u32,
    pub max_iters: usize,
    pub parts: Vec<usize>,
    pub seed: u64,
    pub n_seeds: u64,
    pub steps: usize,
    pub rotation: f64,
    pub eta0_values: Vec<f64>,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    pub quad_order: usize,
    pub max_subdiv: usize,
    pub kappa_max_dofs: usize,
    pub output: PathBuf,
    pub timing: bool,
    pub vtk: bool,
    pub dump_quadrature: bool,
}

impl Default for RunDescriptor {
    fn default() -> Self {
        Self::new(Experiment::Converge)
    }
}

impl RunDescriptor {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            geometry: GeometryId::Pacman,
            transform: RigidTransform::default(),
            benchmark: BenchmarkId::Fichera,
            space: SpaceKind::Aggregated,
            criterion: CriterionKind::LiBettess,
            eta0: 0.25,
            beta: None,
            beta_std: 2.0,
            gammas: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            levels: Vec::new(),
            level: match experiment {
                Experiment::SweepCut | Experiment::PartitionCheck => 4,
                _ => 3,
            },
            max_iters: DEFAULT_MAX_ITERS,
            parts: vec![2, 4, 8],
            seed: 0,
            n_seeds: 50,
            steps: 64,
            rotation: 0.0,
            eta0_values: ETA0_VALUES.to_vec(),
            solver_tol: 1e-9,
            solver_maxit: match experiment {
                Experiment::SweepCut | Experiment::Eta0Sweep => 1000,
                _ => 50_000,
            },
            quad_order: 3,
            max_subdiv: 4,
            kappa_max_dofs: 0,
            output: PathBuf::from("out"),
            timing: false,
            vtk: false,
            dump_quadrature: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let d: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    fn beta_for(&self, space: SpaceKind) -> f64 {
        match (space, self.beta) {
            (SpaceKind::Aggregated, Some(b)) => b,
            (SpaceKind::Aggregated, None) => 25.0,
            (SpaceKind::Standard, Some(b)) if self.experiment != Experiment::SweepCut => b,
            (SpaceKind::Standard, _) => self.beta_std,
        }
    }

    fn weak_form(&self, space: SpaceKind) -> WeakFormConfig {
        let beta = self.beta_for(space);
        let tau = match space {
            SpaceKind::Aggregated => TauPolicy::Aggregated { beta },
            SpaceKind::Standard => TauPolicy::Standard { beta },
        };
        WeakFormConfig { tau, order: self.quad_order }
    }

    pub fn setup(&self) -> Result<ProblemSetup, Error> {
        let ls = self.geometry.level_set(self.transform)?;
        let problem = self.benchmark.benchmark(self.geometry, self.transform)?;
        let mut s = ProblemSetup::new(domain(), ls, problem, self.space);
        s.eta0 = self.eta0;
        s.weak_form = self.weak_form(self.space);
        s.max_subdiv = self.max_subdiv;
        s.solver_tol = self.solver_tol;
        s.solver_maxit = self.solver_maxit;
        s.initial_level = self.level;
        s.kappa_max_dofs = self.kappa_max_dofs;
        Ok(s)
    }

    pub fn converge_config(&self) -> Result<ConvergeConfig, Error> {
        Ok(ConvergeConfig {
            setup: self.setup()?,
            geometry: self.geometry,
            criterion: self.criterion,
            targets: self.gammas.clone(),
            levels: self.levels.clone(),
            max_iters: self.max_iters,
            timing: self.timing,
        })
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            geometry: self.geometry,
            benchmark: self.benchmark,
            base: self.transform,
            level: self.level,
            steps: self.steps,
            rotation: self.rotation,
            eta0: self.eta0,
            beta_ag: self.beta_for(SpaceKind::Aggregated),
            beta_std: self.beta_std,
            order: self.quad_order,
            max_subdiv: self.max_subdiv,
            solver_tol: self.solver_tol,
            solver_maxit: self.solver_maxit,
            spaces: vec![SpaceKind::Aggregated, SpaceKind::Standard],
        }
    }

    pub fn partition_config(&self) -> PartitionCheckConfig {
        PartitionCheckConfig {
            parts: self.parts.clone(),
            seeds: (self.seed..self.seed + self.n_seeds).collect(),
            base_level: self.level,
            eta0: self.eta0,
            assembly: true,
        }
    }

    /// Field-level range checks. Downstream constructors repeat the checks
    /// they own.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("field `{field}`: {msg}")));
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return bad("eta0", format!("must lie in (0, 1], got {}", self.eta0));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad("beta", format!("must be positive, got {b}"));
            }
        }
        if !(self.beta_std > 0.0 && self.beta_std.is_finite()) {
            return bad("beta_std", format!("must be positive, got {}", self.beta_std));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return bad("solver_tol", format!("must lie in (0, 1), got {}", self.solver_tol));
        }
        if self.solver_maxit == 0 {
            return bad("solver_maxit", "must be positive".into());
        }
        if !(1..=6).contains(&self.quad_order) {
            return bad("quad_order", format!("must lie in 1..=6, got {}", self.quad_order));
        }
        if self.max_subdiv > 10 {
            return bad("max_subdiv", format!("at most 10, got {}", self.max_subdiv));
        }
        if self.level > 12 {
            return bad("level", format!("at most 12, got {}", self.level));
        }
        if !(self.transform.translation.iter().all(|t| t.is_finite()) && self.transform.rotation.is_finite()) {
            return bad("transform", "must be finite".into());
        }
        match self.experiment {
            Experiment::Converge | Experiment::Eta0Sweep => {
                if self.levels.is_empty() {
                    if self.gammas.is_empty() {
                        return bad("gammas", "needs at least one target when `levels` is empty".into());
                    }
                    if self.gammas.iter().any(|g| !(*g > 0.0)) || self.gammas.windows(2).any(|w| w[1] >= w[0]) {
                        return bad("gammas", "targets must be positive and strictly decreasing".into());
                    }
                } else if self.levels.windows(2).any(|w| w[1] <= w[0]) || self.levels.iter().any(|&l| l > 12) {
                    return bad("levels", "must be strictly increasing and at most 12".into());
                }
                if self.experiment == Experiment::Eta0Sweep
                    && (self.eta0_values.is_empty() || self.eta0_values.iter().any(|e| !(*e > 0.0 && *e <= 1.0)))
                {
                    return bad("eta0_values", "needs values in (0, 1]".into());
                }
            }
            Experiment::SweepCut => {}
            Experiment::PartitionCheck => {
                if self.parts.is_empty() || self.parts.contains(&0) {
                    return bad("parts", "needs positive subdomain counts".into());
                }
                if self.n_seeds == 0 {
                    return bad("n_seeds", "must be positive".into());
                }
            }
        }
        if matches!(self.experiment, Experiment::SweepCut | Experiment::Eta0Sweep) && self.steps == 0 {
            return bad("steps", "must be positive".into());
        }
        if self.benchmark == BenchmarkId::Fichera && self.geometry != GeometryId::Pacman {
            return bad("benchmark", "fichera needs the pacman geometry".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("[{tag}] {0}", tag = .0.tag())]
    Runtime(#[from] Error),
}

impl CliError {
    /// 1 for configuration errors, 2 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn write_csv(dir: &Path, name: &str, t: &CsvTable, out: &mut Vec<PathBuf>) -> Result<(), Error> {
    let p = dir.join(name);
    t.write(&p)?;
    out.push(p);
    Ok(())
}

/// Runs the experiment and returns the written files. The output directory
/// receives `run.json` (the normalized descriptor) and the result tables.
pub fn execute(d: &RunDescriptor) -> Result<Vec<PathBuf>, CliError> {
    d.validate()?;
    let dir = &d.output;
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let mut files = Vec::new();
    let run_json = dir.join("run.json");
    write_text(&run_json, &(d.to_json() + "\n"))?;
    files.push(run_json);
    match d.experiment {
        Experiment::Converge => {
            let cfg = d.converge_config().map_err(config_or_runtime)?;
            let mut k = 0;
            let mut vtk_files = Vec::new();
            let mut quad = None;
            let (_, table) = run_converge(&cfg, |_, s| {
                if d.vtk {
                    let nodal = s.space.constraints.prolongate(&s.pcg.x)?;
                    let text = vtk_string(&s.mesh, &s.classes, Some((&s.space, &nodal)), &[("gamma_T", &s.gamma_t)]);
                    let p = dir.join(format!("converge_{k:02}.vtk"));
                    write_text(&p, &text)?;
                    vtk_files.push(p);
                }
                if d.dump_quadrature {
                    quad = Some(agfem_core::io::quadrature_table(&s.mesh, &s.cut));
                }
                k += 1;
                Ok(())
            })?;
            write_csv(dir, "converge.csv", &table, &mut files)?;
            files.extend(vtk_files);
            if let Some(q) = quad {
                write_csv(dir, "quadrature.csv", &q, &mut files)?;
            }
        }
        Experiment::SweepCut => {
            let cfg = d.sweep_config();
            let rows = sweep_cut(&cfg)?;
            write_csv(dir, "sweep-cut.csv", &sweep_table(&cfg, &rows), &mut files)?;
        }
        Experiment::PartitionCheck => {
            let t = partition_check(&d.partition_config())?;
            write_csv(dir, "partition-check.csv", &t, &mut files)?;
        }
        Experiment::Eta0Sweep => {
            let cfg = Eta0SweepConfig {
                converge: d.converge_config().map_err(config_or_runtime)?,
                sweep: d.sweep_config(),
                values: d.eta0_values.clone(),
            };
            let (_, t) = eta0_sweep(&cfg)?;
            write_csv(dir, "eta0-sweep.csv", &t, &mut files)?;
        }
    }
    Ok(files)
}

fn config_or_runtime(e: Error) -> CliError {
    match e {
        Error::Parameter(m) => CliError::Config(m),
        e => CliError::Runtime(e),
    }
}

/// Reads a descriptor file; `output` overrides the descriptor's directory.
pub fn load(path: &Path, output: Option<PathBuf>) -> Result<RunDescriptor, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut d = RunDescriptor::from_json(&text)?;
    if let Some(o) = output {
        d.output = o;
    }
    Ok(d)
}
