//! Aggregated unfitted finite elements on 2:1-balanced quadtrees.
//!
//! The pipeline runs in this order:
//!
//! 1. [`mesh`] builds and adapts a quadtree over a box.
//! 2. [`geometry`] classifies cells against a level set and builds cut quadratures.
//! 3. [`aggregation`] maps every ill-posed cell to a well-posed root cell.
//! 4. [`fe_space`] numbers Q1 dofs and builds hanging plus aggregation constraints.
//! 5. [`assembly`] assembles the Nitsche Poisson system, solves it, and measures conditioning.
//! 6. [`amr`] drives error-controlled refinement.
//!
//! [`partition`] simulates the distributed-memory ghost layers and checks that all
//! constraints resolve locally. [`experiments`] wires everything into the runs
//! exposed by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod aggregation;
pub mod amr;
pub mod assembly;
pub mod benchmarks;
pub mod error;
pub mod experiments;
pub mod fe_space;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod partition;
pub mod quadrature;

pub use aggregation::{build_root_map, validate_aggregates, AggregateDiagnostics, RootCellMap};
pub use amr::{adapt_until, convergence_test, mark_cells, AmrState, RemeshCriterion};
pub use assembly::{
    assemble, energy_error, solve_pcg, spectral_report, LinearSystem, SpectralReport,
    TauPolicy, WeakFormConfig,
};
pub use benchmarks::Benchmark;
pub use error::{Error, Result};
pub use fe_space::{
    aggregation_constraints, classify_dofs, distribute_dofs, hanging_constraints,
    standard_constraints, ConstraintSet, DofClass, DofClassification, DofTable, FeSpace,
    SpaceKind,
};
pub use geometry::{
    classify_cells, cut_quadrature, CellClass, CellClasses, CutQuadrature, LevelSet,
    RigidTransform, Shape,
};
pub use mesh::{BoxDomain, CellId, ForestMesh, VefTable};
pub use partition::PartitionLayout;
