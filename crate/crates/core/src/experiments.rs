//! The runs behind the command-line tool: convergence studies, the cut
//! robustness sweep, the distributed-constraint check and the `η₀` sweep.
//!
//! All geometries live in `[-1, 1]²`: the pacman has radius 0.9 and a π/2
//! wedge with its corner at the origin, the disk has radius 0.9 and the
//! annulus radii 0.3 and 0.9.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amr::{
    convergence_test_with, fitted_slope, uniform_study, ConvergenceRow, CriterionKind,
    ProblemSetup, RemeshCriterion, Solved,
};
use crate::assembly::{
    assemble, energy_error, exact_energy_norm, solve_pcg, spectrum, TauPolicy, WeakFormConfig,
};
use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::fe_space::{FeSpace, SpaceKind};
use crate::geometry::{classify_cells, cut_quadrature, LevelSet, RigidTransform};
use crate::io::{fmt_f64, fmt_opt, CsvTable};
use crate::mesh::{BoxDomain, ForestMesh};
use crate::partition::{check_partition, distributed_assembly_deviation, partition_sfc};

pub const PACMAN_WEDGE: f64 = FRAC_PI_2;
pub const PACMAN_RADIUS: f64 = 0.9;
pub const DISK_RADIUS: f64 = 0.9;
pub const ANNULUS_RADII: (f64, f64) = (0.3, 0.9);

/// The `η₀` values of the sensitivity study.
pub const ETA0_VALUES: [f64; 6] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryId {
    Pacman,
    Disk,
    Annulus,
}

impl GeometryId {
    pub fn name(&self) -> &'static str {
        match self {
            GeometryId::Pacman => "pacman",
            GeometryId::Disk => "disk",
            GeometryId::Annulus => "annulus",
        }
    }

    pub fn level_set(&self, t: RigidTransform) -> Result<LevelSet> {
        let ls = match self {
            GeometryId::Pacman => LevelSet::pacman(PACMAN_WEDGE, PACMAN_RADIUS)?,
            GeometryId::Disk => LevelSet::circle([0.0, 0.0], DISK_RADIUS)?,
            GeometryId::Annulus => LevelSet::annulus([0.0, 0.0], ANNULUS_RADII.0, ANNULUS_RADII.1)?,
        };
        Ok(ls.with_transform(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkId {
    Fichera,
    Shock2d,
    Affine,
}

impl BenchmarkId {
    /// The corner solution follows the pacman's rigid motion.
    pub fn benchmark(&self, geometry: GeometryId, frame: RigidTransform) -> Result<Benchmark> {
        match self {
            BenchmarkId::Fichera if geometry != GeometryId::Pacman => Err(Error::Parameter(
                "the fichera benchmark needs the pacman geometry".into(),
            )),
            BenchmarkId::Fichera => Ok(Benchmark::Fichera { wedge: PACMAN_WEDGE, frame }),
            BenchmarkId::Shock2d => Ok(Benchmark::Shock2d),
            BenchmarkId::Affine => Ok(Benchmark::Affine),
        }
    }
}

pub fn domain() -> BoxDomain {
    BoxDomain::symmetric()
}

fn beta(cfg: &WeakFormConfig) -> f64 {
    match cfg.tau {
        TauPolicy::Aggregated { beta } | TauPolicy::Standard { beta } => beta,
    }
}

fn space_name(s: SpaceKind) -> &'static str {
    match s {
        SpaceKind::Aggregated => "aggregated",
        SpaceKind::Standard => "standard",
    }
}

fn criterion_name(c: CriterionKind) -> &'static str {
    match c {
        CriterionKind::Uniform => "uniform",
        CriterionKind::LiBettess => "li-bettess",
        CriterionKind::OnateBugeda => "onate-bugeda",
    }
}

/// A convergence study: uniform levels when `levels` is non-empty, otherwise
/// the target sequence under `criterion`.
#[derive(Clone, Debug)]
pub struct ConvergeConfig {
    pub setup: ProblemSetup,
    pub geometry: GeometryId,
    pub criterion: CriterionKind,
    pub targets: Vec<f64>,
    pub levels: Vec<u32>,
    pub max_iters: usize,
    /// Fill the `wall_seconds` column (breaks byte-reproducibility).
    pub timing: bool,
}

pub fn run_converge(
    cfg: &ConvergeConfig,
    visit: impl FnMut(&ConvergenceRow, &Solved) -> Result<()>,
) -> Result<(Vec<ConvergenceRow>, CsvTable)> {
    let rows = if cfg.levels.is_empty() {
        let crit = RemeshCriterion::new(cfg.criterion);
        convergence_test_with(&cfg.setup, &crit, &cfg.targets, cfg.max_iters, visit)?
    } else {
        uniform_study(&cfg.setup, &cfg.levels, visit)?
    };
    let mut t = CsvTable::new(&[
        "target",
        "rel_energy_error",
        "n_dofs",
        "n_cells",
        "cg_iters",
        "kappa_A",
        "wall_seconds",
        "converged",
    ]);
    let crit = if cfg.levels.is_empty() { criterion_name(cfg.criterion) } else { "uniform-levels" };
    t.meta("experiment", "converge")
        .meta("geometry", cfg.geometry.name())
        .meta("benchmark", cfg.setup.benchmark.name())
        .meta("space", space_name(cfg.setup.space))
        .meta("criterion", crit)
        .meta("eta0", cfg.setup.eta0)
        .meta("beta", beta(&cfg.setup.weak_form));
    if rows.len() >= 2 {
        t.meta("slope", fmt_f64(fitted_slope(&rows)));
    }
    for r in &rows {
        t.push(vec![
            fmt_f64(r.target),
            fmt_f64(r.rel_error),
            r.n_dofs.to_string(),
            r.n_cells.to_string(),
            r.cg_iters.to_string(),
            fmt_opt(r.kappa_a),
            if cfg.timing { fmt_f64(r.wall_seconds) } else { String::new() },
            r.converged.to_string(),
        ]);
    }
    Ok((rows, t))
}

/// Translation sweep `t_k = h s_k (1, -1)`, `s_k = 0.9 · 2^{-k/2}`, optionally
/// with a rotation `rotation · s_k`, applied on top of `base`.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub geometry: GeometryId,
    pub benchmark: BenchmarkId,
    pub base: RigidTransform,
    pub level: u32,
    pub steps: usize,
    pub rotation: f64,
    pub eta0: f64,
    pub beta_ag: f64,
    pub beta_std: f64,
    pub order: usize,
    pub max_subdiv: usize,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    pub spaces: Vec<SpaceKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryId::Pacman,
            benchmark: BenchmarkId::Fichera,
            base: RigidTransform::default(),
            level: 4,
            steps: 64,
            rotation: 0.0,
            eta0: 0.25,
            beta_ag: 25.0,
            beta_std: 2.0,
            order: 3,
            max_subdiv: 4,
            solver_tol: 1e-9,
            solver_maxit: 1000,
            spaces: vec![SpaceKind::Aggregated, SpaceKind::Standard],
        }
    }
}

impl SweepConfig {
    pub fn shift(&self, k: usize) -> f64 {
        0.9 * 2f64.powf(-(k as f64) / 2.0)
    }

    pub fn transform(&self, k: usize) -> RigidTransform {
        let h = (domain().hi[0] - domain().lo[0]) / f64::from(1u32 << self.level);
        let s = self.shift(k);
        RigidTransform {
            translation: [self.base.translation[0] + h * s, self.base.translation[1] - h * s],
            rotation: self.base.rotation + self.rotation * s,
        }
    }
}

/// Outcome of one space at one sweep step. Fields after `status` are `None`
/// when the pipeline stopped before producing them.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub step: usize,
    pub shift: f64,
    pub space: SpaceKind,
    /// `ok`, `not-converged` or the tag of the error that stopped the step.
    pub status: String,
    pub min_eta: f64,
    pub n_dofs: Option<usize>,
    pub kappa_m: Option<f64>,
    pub kappa_a: Option<f64>,
    pub lambda_min_a: Option<f64>,
    pub max_coefficient: Option<f64>,
    pub cg_iters: Option<usize>,
    pub rel_error: Option<f64>,
}

impl SweepRow {
    pub fn solver_failed(&self) -> bool {
        self.status != "ok"
    }
}

fn sweep_step(cfg: &SweepConfig, mesh: &ForestMesh, k: usize, kind: SpaceKind) -> Result<SweepRow> {
    let frame = cfg.transform(k);
    let ls = cfg.geometry.level_set(frame)?;
    let problem = cfg.benchmark.benchmark(cfg.geometry, frame)?;
    let mut row = SweepRow {
        step: k,
        shift: cfg.shift(k),
        space: kind,
        status: String::new(),
        min_eta: f64::NAN,
        n_dofs: None,
        kappa_m: None,
        kappa_a: None,
        lambda_min_a: None,
        max_coefficient: None,
        cg_iters: None,
        rel_error: None,
    };
    let weak_form = WeakFormConfig {
        tau: match kind {
            SpaceKind::Aggregated => TauPolicy::Aggregated { beta: cfg.beta_ag },
            SpaceKind::Standard => TauPolicy::Standard { beta: cfg.beta_std },
        },
        order: cfg.order,
    };
    let result = (|| -> Result<()> {
        let cut = cut_quadrature(mesh, &ls, cfg.order, cfg.max_subdiv)?;
        let classes = classify_cells(mesh, &cut, cfg.eta0)?;
        row.min_eta = (0..mesh.len())
            .filter(|&i| classes.is_active(i))
            .map(|i| classes.eta[i])
            .fold(f64::INFINITY, f64::min);
        let space = FeSpace::build(mesh, &classes, &ls, kind)?;
        row.max_coefficient = Some(space.constraints.max_coefficient());
        let sys = assemble(mesh, &space, &cut, &weak_form, &problem)?;
        row.n_dofs = Some(sys.n());
        let (sa, sm) = (spectrum(&sys.a), spectrum(&sys.m));
        row.kappa_a = Some(sa.kappa);
        row.kappa_m = Some(sm.kappa);
        row.lambda_min_a = Some(sa.lambda_min);
        let pcg = solve_pcg(&sys, cfg.solver_tol, cfg.solver_maxit)?;
        row.cg_iters = Some(pcg.iterations);
        if !pcg.converged {
            row.status = "not-converged".into();
            return Ok(());
        }
        let (err, _) = energy_error(mesh, &space, &cut, &pcg.x, &problem)?;
        row.rel_error = Some(err / exact_energy_norm(mesh, &cut, &problem));
        row.status = "ok".into();
        Ok(())
    })();
    match result {
        Ok(()) => Ok(row),
        Err(e @ Error::Parameter(_)) => Err(e),
        Err(e) => {
            row.status = e.tag().to_string();
            Ok(row)
        }
    }
}

pub fn sweep_cut(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.steps == 0 || cfg.spaces.is_empty() {
        return Err(Error::Parameter("sweep needs at least one step and one space".into()));
    }
    let mesh = ForestMesh::new_uniform(domain(), cfg.level)?;
    let jobs: Vec<(usize, SpaceKind)> =
        (0..cfg.steps).flat_map(|k| cfg.spaces.iter().map(move |&s| (k, s))).collect();
    jobs.par_iter().map(|&(k, s)| sweep_step(cfg, &mesh, k, s)).collect()
}

pub fn sweep_table(cfg: &SweepConfig, rows: &[SweepRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "step",
        "shift",
        "space",
        "status",
        "min_eta",
        "n_dofs",
        "kappa_M",
        "kappa_A",
        "lambda_min_A",
        "max_abs_C",
        "cg_iters",
        "rel_energy_error",
    ]);
    t.meta("experiment", "sweep-cut")
        .meta("geometry", cfg.geometry.name())
        .meta("level", cfg.level)
        .meta("eta0", cfg.eta0)
        .meta("beta_ag", cfg.beta_ag)
        .meta("beta_std", cfg.beta_std)
        .meta("rotation", cfg.rotation);
    for r in rows {
        t.push(vec![
            r.step.to_string(),
            fmt_f64(r.shift),
            space_name(r.space).into(),
            r.status.clone(),
            fmt_f64(r.min_eta),
            r.n_dofs.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(r.kappa_m),
            fmt_opt(r.kappa_a),
            fmt_opt(r.lambda_min_a),
            fmt_opt(r.max_coefficient),
            r.cg_iters.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(r.rel_error),
        ]);
    }
    t
}

/// A random shape on `[-1, 1]²` and a randomly refined, balanced mesh whose
/// cut cells all have connected interiors.
pub fn random_instance(seed: u64, base_level: u32) -> Result<(ForestMesh, LevelSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = RigidTransform {
        translation: [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)],
        rotation: rng.gen_range(0.0..2.0 * PI),
    };
    let ls = match rng.gen_range(0..3) {
        0 => LevelSet::pacman(rng.gen_range(0.4..1.6) * PI, rng.gen_range(0.6..0.9))?,
        1 => LevelSet::circle([0.0, 0.0], rng.gen_range(0.4..0.9))?,
        _ => LevelSet::annulus([0.0, 0.0], rng.gen_range(0.2..0.4), rng.gen_range(0.6..0.9))?,
    }
    .with_transform(frame);
    let mut mesh = ForestMesh::new_uniform(domain(), base_level)?;
    for _ in 0..2 {
        let flags: Vec<bool> = (0..mesh.len())
            .map(|i| {
                let (lo, hi) = mesh.cell_bounds(i);
                let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                let near = ls.eval(c).abs() <= (hi[0] - lo[0]) * 0.75;
                rng.gen_bool(if near { 0.5 } else { 0.05 })
            })
            .collect();
        mesh = mesh.refine(&flags)?.0.enforce_two_one_balance().0;
    }
    for _ in 0..4 {
        match cut_quadrature(&mesh, &ls, 2, 4) {
            Ok(_) => return Ok((mesh, ls)),
            Err(Error::DisconnectedCut { cell, .. } | Error::DegenerateGeometry { cell, .. }) => {
                let idx = mesh.index_of(cell).expect("reported cell is a leaf");
                let flags: Vec<bool> = (0..mesh.len()).map(|i| i == idx).collect();
                mesh = mesh.refine(&flags)?.0.enforce_two_one_balance().0;
            }
            Err(e) => return Err(e),
        }
    }
    cut_quadrature(&mesh, &ls, 2, 4).map(|_| (mesh, ls))
}

#[derive(Clone, Debug)]
pub struct PartitionCheckConfig {
    pub parts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base_level: u32,
    pub eta0: f64,
    /// Also compare the summed per-subdomain assembly with the serial one.
    pub assembly: bool,
}

/// Runs the distributed-constraint check on random instances. Any violation
/// is returned as an error.
pub fn partition_check(cfg: &PartitionCheckConfig) -> Result<CsvTable> {
    if cfg.parts.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Parameter("partition check needs subdomain counts and seeds".into()));
    }
    let runs: Vec<Vec<Vec<String>>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Vec<String>>> {
            let (mesh, ls) = random_instance(seed, cfg.base_level)?;
            let cut = cut_quadrature(&mesh, &ls, 2, 4)?;
            let classes = classify_cells(&mesh, &cut, cfg.eta0)?;
            let space = FeSpace::build(&mesh, &classes, &ls, SpaceKind::Aggregated)?;
            let mut rows = Vec::new();
            for &p in &cfg.parts {
                let (layout, report) = check_partition(&mesh, &classes, &space, partition_sfc(&mesh, p)?)?;
                let dev = if cfg.assembly {
                    distributed_assembly_deviation(
                        &layout,
                        &mesh,
                        &space,
                        &cut,
                        &WeakFormConfig::aggregated(),
                        &Benchmark::Affine,
                    )?
                } else {
                    f64::NAN
                };
                for r in report {
                    rows.push(vec![
                        seed.to_string(),
                        p.to_string(),
                        r.subdomain.to_string(),
                        r.n_local.to_string(),
                        r.n_true_ghost.to_string(),
                        r.n_remote_ghost.to_string(),
                        r.constraints_checked.to_string(),
                        r.max_masters.to_string(),
                        fmt_f64(dev),
                    ]);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut t = CsvTable::new(&[
        "seed",
        "parts",
        "subdomain",
        "n_local",
        "n_true_ghost",
        "n_remote_ghost",
        "constraints_checked",
        "max_masters",
        "assembly_deviation",
    ]);
    t.meta("experiment", "partition-check").meta("base_level", cfg.base_level).meta("eta0", cfg.eta0);
    for r in runs.into_iter().flatten() {
        t.push(r);
    }
    Ok(t)
}

/// Outcome of one `η₀` value.
#[derive(Clone, Debug, PartialEq)]
pub struct Eta0Summary {
    pub eta0: f64,
    /// `ok` or the tag of the error that stopped the convergence run.
    pub converge_status: String,
    pub converge_rel_error: Option<f64>,
    pub converge_max_kappa_a: Option<f64>,
    pub sweep_failures: usize,
    pub sweep_max_kappa_a: f64,
    pub sweep_min_lambda: f64,
}

#[derive(Clone, Debug)]
pub struct Eta0SweepConfig {
    pub converge: ConvergeConfig,
    pub sweep: SweepConfig,
    pub values: Vec<f64>,
}

/// Repeats the convergence run and an aggregated cut sweep for every `η₀`.
pub fn eta0_sweep(cfg: &Eta0SweepConfig) -> Result<(Vec<Eta0Summary>, CsvTable)> {
    if cfg.values.is_empty() {
        return Err(Error::Parameter("no eta0 values".into()));
    }
    let mut out = Vec::new();
    for &eta0 in &cfg.values {
        let mut conv = cfg.converge.clone();
        conv.setup.eta0 = eta0;
        let (converge_status, converge_rel_error, converge_max_kappa_a) =
            match run_converge(&conv, |_, _| Ok(())) {
                Ok((rows, _)) => {
                    let kappa = rows.iter().filter_map(|r| r.kappa_a).fold(None, |m: Option<f64>, k| {
                        Some(m.map_or(k, |m| m.max(k)))
                    });
                    ("ok".to_string(), rows.last().map(|r| r.rel_error), kappa)
                }
                Err(e @ Error::Parameter(_)) => return Err(e),
                Err(e) => (e.tag().to_string(), None, None),
            };
        let mut sweep = cfg.sweep.clone();
        sweep.eta0 = eta0;
        sweep.spaces = vec![SpaceKind::Aggregated];
        let rows = sweep_cut(&sweep)?;
        let sweep_failures = rows
            .iter()
            .filter(|r| r.solver_failed() || r.lambda_min_a.is_none_or(|l| !(l > 0.0)))
            .count();
        let sweep_max_kappa_a = rows.iter().filter_map(|r| r.kappa_a).fold(0.0, f64::max);
        let sweep_min_lambda = rows.iter().filter_map(|r| r.lambda_min_a).fold(f64::INFINITY, f64::min);
        out.push(Eta0Summary {
            eta0,
            converge_status,
            converge_rel_error,
            converge_max_kappa_a,
            sweep_failures,
            sweep_max_kappa_a,
            sweep_min_lambda,
        });
    }
    let mut t = CsvTable::new(&[
        "eta0",
        "converge_status",
        "converge_rel_energy_error",
        "converge_max_kappa_A",
        "sweep_failures",
        "sweep_max_kappa_A",
        "sweep_min_lambda_A",
    ]);
    t.meta("experiment", "eta0-sweep")
        .meta("geometry", cfg.converge.geometry.name())
        .meta("benchmark", cfg.converge.setup.benchmark.name())
        .meta("sweep_level", cfg.sweep.level)
        .meta("sweep_steps", cfg.sweep.steps);
    for s in &out {
        t.push(vec![
            fmt_f64(s.eta0),
            s.converge_status.clone(),
            fmt_opt(s.converge_rel_error),
            fmt_opt(s.converge_max_kappa_a),
            s.sweep_failures.to_string(),
            fmt_f64(s.sweep_max_kappa_a),
            fmt_f64(s.sweep_min_lambda),
        ]);
    }
    Ok((out, t))
}
