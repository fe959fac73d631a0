use std::process::Command;

use agfem_cli::{execute, Experiment, RunDescriptor};
use agfem_core::experiments::{BenchmarkId, GeometryId};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agfem"))
}

fn csv_bytes(d: &RunDescriptor) -> Vec<u8> {
    execute(d).unwrap();
    std::fs::read(d.output.join(format!("{}.csv", d.experiment.name()))).unwrap()
}

#[test]
fn identical_descriptors_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        RunDescriptor { steps: 6, ..RunDescriptor::new(Experiment::SweepCut) },
        RunDescriptor { gammas: vec![0.1, 0.05, 0.025], kappa_max_dofs: 500, ..RunDescriptor::new(Experiment::Converge) },
        RunDescriptor { n_seeds: 4, level: 3, ..RunDescriptor::new(Experiment::PartitionCheck) },
    ];
    for (k, d) in runs.into_iter().enumerate() {
        let a = RunDescriptor { output: tmp.path().join(format!("a{k}")), ..d.clone() };
        let b = RunDescriptor { output: tmp.path().join(format!("b{k}")), ..d };
        assert_eq!(csv_bytes(&a), csv_bytes(&b), "{:?}", a.experiment);
    }
}

#[test]
fn affine_converge_has_one_exact_row() {
    let tmp = tempfile::tempdir().unwrap();
    let d = RunDescriptor {
        geometry: GeometryId::Disk,
        benchmark: BenchmarkId::Affine,
        gammas: vec![1e-6],
        solver_tol: 1e-12,
        vtk: true,
        output: tmp.path().to_path_buf(),
        ..RunDescriptor::new(Experiment::Converge)
    };
    let files = execute(&d).unwrap();
    let t = agfem_core::io::CsvTable::parse(&std::fs::read_to_string(tmp.path().join("converge.csv")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.floats("rel_energy_error").unwrap()[0] < 1e-9);
    assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "vtk")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"experiment": "converge", "eta0": -1}"#).unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta0"));

    // The hole boundary crosses one cell edge twice at level 5.
    let split = tmp.path().join("split.json");
    std::fs::write(
        &split,
        r#"{"geometry": "annulus", "benchmark": "affine", "levels": [5],
            "transform": {"translation": [0.013, -0.021], "rotation": 0.3}}"#,
    )
    .unwrap();
    let out = bin().arg("run").arg(&split).arg("-o").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[disconnected-cut]"));

    let ok = tmp.path().join("ok.json");
    std::fs::write(&ok, r#"{"experiment": "sweep-cut", "steps": 2, "level": 3}"#).unwrap();
    let out = bin().env("AGFEM_THREADS", "2").arg("run").arg(&ok).arg("-o").arg(tmp.path().join("s")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("s/sweep-cut.csv").exists());

    let out = bin().args(["template", "eta0-sweep"]).output().unwrap();
    let d = RunDescriptor::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(d.experiment, Experiment::Eta0Sweep);
}
