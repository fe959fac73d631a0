//! Error-driven adaptive refinement with the acceptability criterion
//! `‖e‖_a ≤ γ` and the Li-Bettess / Oñate-Bugeda marking rules.
//!
//! Indicators are the true local errors `γ_T = ‖∇(u - u_h)‖_{T∩Ω}` since all
//! benchmarks have closed-form solutions.

use std::time::Instant;

use crate::assembly::{
    assemble, energy_error, exact_energy_norm, solve_pcg, spectrum, LinearSystem, PcgResult,
    Spectrum, WeakFormConfig,
};
use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::fe_space::{FeSpace, SpaceKind};
use crate::geometry::{classify_cells, cut_quadrature, CellClasses, CutQuadrature, LevelSet};
use crate::mesh::{BoxDomain, ForestMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Uniform,
    LiBettess,
    OnateBugeda,
}

/// Marking rule together with the interpolation degree `m` and dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemeshCriterion {
    pub kind: CriterionKind,
    pub degree: u32,
    pub dim: u32,
}

impl RemeshCriterion {
    pub fn new(kind: CriterionKind) -> Self {
        Self { kind, degree: 1, dim: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.dim != 2 {
            return Err(Error::Parameter(format!(
                "criterion needs m >= 1 and d = 2, got m = {}, d = {}",
                self.degree, self.dim
            )));
        }
        Ok(())
    }

    /// Predicted optimal cell count
    /// `M* = γ^{-d/m} (Σ_T ‖e‖_T^{d/(m+d/2)})^{(m+d/2)/m}`.
    pub fn optimal_cell_count(&self, gamma: f64, gamma_t: &[f64]) -> f64 {
        let (m, d) = (self.degree as f64, self.dim as f64);
        let p = d / (m + d / 2.0);
        let s: f64 = gamma_t.iter().map(|e| e.powf(p)).sum();
        gamma.powf(-d / m) * s.powf((m + d / 2.0) / m)
    }
}

/// Refinement flags from per-cell indicators. `area[T]` is `|T∩Ω|`; inactive
/// cells are never flagged.
pub fn mark_by_indicators(
    gamma_t: &[f64],
    area: &[f64],
    active: &[bool],
    gamma: f64,
    crit: &RemeshCriterion,
) -> Vec<bool> {
    let n = gamma_t.len();
    match crit.kind {
        CriterionKind::Uniform => active.to_vec(),
        CriterionKind::LiBettess => {
            let act: Vec<f64> = (0..n).filter(|&i| active[i]).map(|i| gamma_t[i]).collect();
            let m_star = crit.optimal_cell_count(gamma, &act);
            if !(m_star > 0.0) {
                return vec![false; n];
            }
            let threshold = gamma / m_star.sqrt();
            (0..n).map(|i| active[i] && gamma_t[i] > threshold).collect()
        }
        CriterionKind::OnateBugeda => {
            let omega: f64 = (0..n).filter(|&i| active[i]).map(|i| area[i]).sum();
            if !(omega > 0.0) {
                return vec![false; n];
            }
            (0..n)
                .map(|i| active[i] && gamma_t[i] > gamma * (area[i] / omega).sqrt())
                .collect()
        }
    }
}

pub fn mark_cells(state: &AmrState, crit: &RemeshCriterion) -> Vec<bool> {
    let s = &state.current;
    let active: Vec<bool> = (0..s.mesh.len()).map(|i| s.classes.is_active(i)).collect();
    mark_by_indicators(&s.gamma_t, &s.area, &active, state.gamma, crit)
}

/// Everything needed to discretize one benchmark.
#[derive(Clone, Debug)]
pub struct ProblemSetup {
    pub domain: BoxDomain,
    pub level_set: LevelSet,
    pub benchmark: Benchmark,
    pub space: SpaceKind,
    pub eta0: f64,
    pub weak_form: WeakFormConfig,
    pub max_subdiv: usize,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    pub initial_level: u32,
    /// Condition numbers are only computed up to this many unknowns.
    pub kappa_max_dofs: usize,
}

impl ProblemSetup {
    pub fn new(domain: BoxDomain, level_set: LevelSet, benchmark: Benchmark, space: SpaceKind) -> Self {
        let weak_form = match space {
            SpaceKind::Aggregated => WeakFormConfig::aggregated(),
            SpaceKind::Standard => WeakFormConfig::standard(),
        };
        Self {
            domain,
            level_set,
            benchmark,
            space,
            eta0: 0.25,
            weak_form,
            max_subdiv: 4,
            solver_tol: 1e-10,
            solver_maxit: 50_000,
            initial_level: 3,
            kappa_max_dofs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weak_form.validate()?;
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(Error::Parameter(format!("eta0 must lie in (0, 1], got {}", self.eta0)));
        }
        if !(self.solver_tol > 0.0) || self.solver_maxit == 0 {
            return Err(Error::Parameter("solver tolerance and maxit must be positive".into()));
        }
        self.level_set.check_finite(&self.domain)
    }

    pub fn initial_mesh(&self) -> Result<ForestMesh> {
        ForestMesh::new_uniform(self.domain, self.initial_level)
    }
}

/// A solved discretization on one mesh.
#[derive(Clone, Debug)]
pub struct Solved {
    pub mesh: ForestMesh,
    pub cut: CutQuadrature,
    pub classes: CellClasses,
    pub space: FeSpace,
    pub system: LinearSystem,
    pub pcg: PcgResult,
    pub energy_error: f64,
    pub exact_norm: f64,
    /// Local errors `γ_T`.
    pub gamma_t: Vec<f64>,
    /// `|T∩Ω|`.
    pub area: Vec<f64>,
    pub kappa: Option<Spectrum>,
}

impl Solved {
    pub fn rel_error(&self) -> f64 {
        self.energy_error / self.exact_norm
    }
}

/// Builds, assembles and solves on `mesh`. A PCG run that misses the
/// tolerance is a solver error.
pub fn solve_on_mesh(setup: &ProblemSetup, mesh: ForestMesh) -> Result<Solved> {
    let cut = cut_quadrature(&mesh, &setup.level_set, setup.weak_form.order, setup.max_subdiv)?;
    let classes = classify_cells(&mesh, &cut, setup.eta0)?;
    let space = FeSpace::build(&mesh, &classes, &setup.level_set, setup.space)?;
    let system = assemble(&mesh, &space, &cut, &setup.weak_form, &setup.benchmark)?;
    let pcg = solve_pcg(&system, setup.solver_tol, setup.solver_maxit)?;
    if !pcg.converged {
        return Err(Error::Solver(format!(
            "PCG reached maxit = {} with relative residual {:e}",
            setup.solver_maxit, pcg.rel_residual
        )));
    }
    let (err, gamma_t) = energy_error(&mesh, &space, &cut, &pcg.x, &setup.benchmark)?;
    let exact_norm = exact_energy_norm(&mesh, &cut, &setup.benchmark);
    let area = (0..mesh.len()).map(|i| cut.interior_area(&mesh, i)).collect();
    let kappa = (system.n() <= setup.kappa_max_dofs).then(|| spectrum(&system.a));
    Ok(Solved { mesh, cut, classes, space, system, pcg, energy_error: err, exact_norm, gamma_t, area, kappa })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub energy_error: f64,
    pub rel_error: f64,
    pub n_dofs: usize,
    pub n_cells: usize,
    pub cg_iters: usize,
}

#[derive(Clone, Debug)]
pub struct AmrState {
    pub current: Solved,
    /// Absolute target on `‖e‖_a`.
    pub gamma: f64,
    /// Number of refinement steps taken.
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
}

pub const DEFAULT_MAX_ITERS: usize = 25;

/// Solve, mark, refine and balance until `‖e‖_a ≤ γ` or `max_iters`
/// refinements. Starts from `start` when given.
pub fn adapt_until(
    setup: &ProblemSetup,
    crit: &RemeshCriterion,
    gamma: f64,
    max_iters: usize,
    start: Option<ForestMesh>,
) -> Result<AmrState> {
    crit.validate()?;
    setup.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("target must be positive, got {gamma}")));
    }
    let mut mesh = match start {
        Some(m) => m,
        None => setup.initial_mesh()?,
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let solved = solve_on_mesh(setup, mesh)?;
        history.push(HistoryEntry {
            energy_error: solved.energy_error,
            rel_error: solved.rel_error(),
            n_dofs: solved.system.n(),
            n_cells: solved.mesh.len(),
            cg_iters: solved.pcg.iterations,
        });
        let mut state = AmrState { current: solved, gamma, iterations, converged: false, history };
        if state.current.energy_error <= gamma {
            state.converged = true;
            return Ok(state);
        }
        let flags = mark_cells(&state, crit);
        if iterations == max_iters || !flags.iter().any(|&f| f) {
            return Ok(state);
        }
        let (refined, _) = state.current.mesh.refine(&flags)?;
        mesh = refined.enforce_two_one_balance().0;
        history = state.history;
        iterations += 1;
    }
}

/// One row of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub target: f64,
    pub rel_error: f64,
    pub n_dofs: usize,
    pub n_cells: usize,
    pub cg_iters: usize,
    pub kappa_a: Option<f64>,
    pub converged: bool,
    pub wall_seconds: f64,
}

fn row(target: f64, s: &Solved, converged: bool, start: Instant) -> ConvergenceRow {
    ConvergenceRow {
        target,
        rel_error: s.rel_error(),
        n_dofs: s.system.n(),
        n_cells: s.mesh.len(),
        cg_iters: s.pcg.iterations,
        kappa_a: s.kappa.map(|k| k.kappa),
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs `adapt_until` for each target in a strictly decreasing sequence,
/// warm-starting from the previous final mesh.
pub fn convergence_test(
    setup: &ProblemSetup,
    crit: &RemeshCriterion,
    gammas: &[f64],
    max_iters: usize,
) -> Result<Vec<ConvergenceRow>> {
    convergence_test_with(setup, crit, gammas, max_iters, |_, _| Ok(()))
}

/// `convergence_test` calling `visit` on every final state.
pub fn convergence_test_with(
    setup: &ProblemSetup,
    crit: &RemeshCriterion,
    gammas: &[f64],
    max_iters: usize,
    mut visit: impl FnMut(&ConvergenceRow, &Solved) -> Result<()>,
) -> Result<Vec<ConvergenceRow>> {
    if gammas.is_empty() {
        return Err(Error::Parameter("empty target sequence".into()));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) || gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter("targets must be positive and strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    let mut mesh = None;
    for &g in gammas {
        let start = Instant::now();
        let state = adapt_until(setup, crit, g, max_iters, mesh.take())?;
        let r = row(g, &state.current, state.converged, start);
        visit(&r, &state.current)?;
        rows.push(r);
        mesh = Some(state.current.mesh);
    }
    Ok(rows)
}

/// Solves on the uniform meshes of the given levels.
pub fn uniform_study(
    setup: &ProblemSetup,
    levels: &[u32],
    mut visit: impl FnMut(&ConvergenceRow, &Solved) -> Result<()>,
) -> Result<Vec<ConvergenceRow>> {
    setup.validate()?;
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("levels must be non-empty and strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &l in levels {
        let start = Instant::now();
        let s = solve_on_mesh(setup, ForestMesh::new_uniform(setup.domain, l)?)?;
        let r = row(f64::NAN, &s, true, start);
        visit(&r, &s)?;
        rows.push(r);
    }
    Ok(rows)
}

/// Least-squares slope of `log(rel_error)` against `log(n_dofs^{1/2})`.
pub fn fitted_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|r| (0.5 * (r.n_dofs as f64).ln(), r.rel_error.ln())).collect();
    least_squares_slope(&pts)
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
