//! Shared fixtures for the pipeline benchmarks in `benches/`.

use agfem_core::amr::ProblemSetup;
use agfem_core::experiments::{domain, BenchmarkId, GeometryId};
use agfem_core::{ForestMesh, RigidTransform, SpaceKind};

/// Fichera on the pacman, shifted off the mesh lines.
pub fn fichera_setup(space: SpaceKind) -> ProblemSetup {
    let t = RigidTransform { translation: [0.013, -0.021], rotation: 0.0 };
    let ls = GeometryId::Pacman.level_set(t).expect("valid geometry");
    let problem = BenchmarkId::Fichera.benchmark(GeometryId::Pacman, t).expect("pacman benchmark");
    ProblemSetup::new(domain(), ls, problem, space)
}

/// Uniform mesh refined twice more along the boundary.
pub fn graded_mesh(setup: &ProblemSetup, level: u32) -> ForestMesh {
    let mut mesh = ForestMesh::new_uniform(setup.domain, level).expect("valid level");
    for _ in 0..2 {
        let flags: Vec<bool> = (0..mesh.len())
            .map(|i| {
                let (lo, hi) = mesh.cell_bounds(i);
                let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                setup.level_set.eval(c).abs() <= hi[0] - lo[0]
            })
            .collect();
        mesh = mesh.refine(&flags).expect("flags match").0.enforce_two_one_balance().0;
    }
    mesh
}
