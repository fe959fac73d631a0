use agfem_core::mesh::{BoxDomain, ForestMesh};
use proptest::prelude::*;

fn refine_randomly(flags_per_round: &[Vec<bool>]) -> ForestMesh {
    let mut mesh = ForestMesh::new_uniform(BoxDomain::unit(), 1).unwrap();
    for round in flags_per_round {
        let flags: Vec<bool> = (0..mesh.len()).map(|i| round[i % round.len()]).collect();
        mesh = mesh.refine(&flags).unwrap().0;
    }
    mesh
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn balancing_yields_a_balanced_cover(rounds in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..23), 1..6)) {
        let mesh = refine_randomly(&rounds);
        let (balanced, parent) = mesh.enforce_two_one_balance();
        prop_assert!(balanced.is_balanced());
        prop_assert!((balanced.covered_area() - 1.0).abs() < 1e-14);
        prop_assert_eq!(parent.len(), balanced.len());
        for (i, &p) in parent.iter().enumerate() {
            let c = balanced.cell(i);
            let q = mesh.cell(p);
            prop_assert!(c.level >= q.level);
            let mut a = c;
            while a.level > q.level {
                a = a.parent().unwrap();
            }
            prop_assert_eq!(a, q);
        }
        let (again, _) = balanced.enforce_two_one_balance();
        prop_assert_eq!(again.leaves(), balanced.leaves());
    }

    #[test]
    fn refinement_keeps_leaves_sorted_and_disjoint(rounds in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..17), 1..5)) {
        let mesh = refine_randomly(&rounds);
        let keys: Vec<_> = mesh.leaves().iter().map(|c| c.key()).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((mesh.covered_area() - 1.0).abs() < 1e-14);
        for i in 0..mesh.len() {
            prop_assert_eq!(mesh.index_of(mesh.cell(i)), Some(i));
        }
    }
}
