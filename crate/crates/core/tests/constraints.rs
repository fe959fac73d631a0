use agfem_core::experiments::random_instance;
use agfem_core::fe_space::{max_hanging_jump, DofClass, FeSpace, Provenance, SpaceKind};
use agfem_core::geometry::{classify_cells, cut_quadrature};

const SEEDS: u64 = 100;

fn affine(x: [f64; 2]) -> f64 {
    2.0 * x[0] - x[1] + 3.0
}

fn check(seed: u64, kind: SpaceKind) {
    let (mesh, ls) = random_instance(seed, 3).unwrap();
    let cut = cut_quadrature(&mesh, &ls, 2, 4).unwrap();
    let classes = classify_cells(&mesh, &cut, 0.25).unwrap();
    let space = FeSpace::build(&mesh, &classes, &ls, kind).unwrap();
    let cs = &space.constraints;
    cs.check_masters().unwrap();

    let full = cs.prolongate(&space.interpolate_free(affine)).unwrap();
    for (d, v) in full.iter().enumerate() {
        let exact = affine(space.dofs.coords[d]);
        assert!((v - exact).abs() <= 1e-12 * exact.abs().max(1.0), "seed {seed} {kind:?} dof {d}: {v} vs {exact}");
    }

    for (d, c) in cs.constraints.iter().enumerate() {
        let Some(c) = c else { continue };
        let sum: f64 = c.masters.iter().map(|m| m.1).sum();
        assert!((sum - 1.0).abs() < 1e-12, "seed {seed} dof {d}: coefficients sum to {sum}");
        for &(m, _) in &c.masters {
            assert!(cs.get(m).is_none(), "seed {seed}: master {m} of {d} is constrained");
            if kind == SpaceKind::Aggregated {
                assert_eq!(space.classification.class[m], DofClass::WellFree, "seed {seed}: master {m}");
            }
        }
        if kind == SpaceKind::Standard {
            assert_eq!(c.provenance, Provenance::H);
        }
    }
    if kind == SpaceKind::Aggregated {
        for (d, &class) in space.classification.class.iter().enumerate() {
            let free = cs.free_index[d].is_some();
            assert_eq!(free, class == DofClass::WellFree, "seed {seed} dof {d} {class:?}");
        }
    }

    let free: Vec<f64> = (0..cs.n_free()).map(|k| ((k * 7919 + seed as usize) % 101) as f64 / 101.0).collect();
    let values = cs.prolongate(&free).unwrap();
    let jump = max_hanging_jump(&mesh, &space.dofs, &values);
    assert!(jump < 1e-12, "seed {seed} {kind:?}: hanging jump {jump}");
}

#[test]
fn aggregated_constraints_on_random_instances() {
    for seed in 0..SEEDS {
        check(seed, SpaceKind::Aggregated);
    }
}

#[test]
fn standard_constraints_on_random_instances() {
    for seed in 0..SEEDS {
        check(seed, SpaceKind::Standard);
    }
}
