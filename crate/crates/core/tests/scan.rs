use bifloc_core::families::builtin;
use bifloc_core::scan::{
    export, import_csv, import_json, period_coherence, pixmap_bytes, render, scan_grid, scan_grid_threads,
    sidecar_path, ExportFormat, GridSpec, Palette, ScanTask,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn small_spec() -> impl Strategy<Value = GridSpec> {
    (
        (-1.5..0.5f64, -1.0..1.0f64),
        (0.05..2.5f64, 0.05..2.5f64),
        (1usize..12, 1usize..12),
        prop::sample::select(vec![ScanTask::FateMap, ScanTask::PeriodMap, ScanTask::MultiplierMap, ScanTask::ActivityMap]),
    )
        .prop_map(|((a, b), (w, h), (nx, ny), task)| {
            let mut spec = GridSpec::new(c(a, b), w, h, nx, ny, task);
            spec.orbit.max_iter = 300;
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serial_equals_parallel(spec in small_spec(), threads in 2usize..6) {
        let fam = builtin("quadratic").unwrap();
        let serial = scan_grid_threads(fam.as_ref(), 0, &spec, 1).unwrap();
        let parallel = scan_grid_threads(fam.as_ref(), 0, &spec, threads).unwrap();
        prop_assert_eq!(serial.cells.len(), spec.nx * spec.ny);
        prop_assert_eq!(&serial, &parallel);
        for palette in [Palette::Period, Palette::Fate, Palette::LogMultiplier, Palette::Activity] {
            prop_assert_eq!(pixmap_bytes(&serial, palette), pixmap_bytes(&parallel, palette));
        }
    }

    #[test]
    fn json_export_round_trips(spec in small_spec()) {
        let fam = builtin("tangent").unwrap();
        let result = scan_grid(fam.as_ref(), 1, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        export(&result, ExportFormat::Json, &path).unwrap();
        prop_assert_eq!(import_json(&path).unwrap(), result);
    }

    #[test]
    fn csv_rows_follow_cells(spec in small_spec()) {
        let fam = builtin("quadratic").unwrap();
        let result = scan_grid(fam.as_ref(), 0, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        export(&result, ExportFormat::Csv, &path).unwrap();
        let rows = import_csv(&path).unwrap();
        prop_assert_eq!(rows.len(), spec.nx * spec.ny);
        for (k, (lambda, cell)) in rows.iter().enumerate() {
            let (i, j) = (k % spec.nx, k / spec.nx);
            prop_assert_eq!(*lambda, spec.cell_center(i, j));
            prop_assert_eq!(*cell, result.cell(i, j));
        }
    }
}

#[test]
fn repeated_scans_are_bit_identical() {
    let fam = builtin("exponential").unwrap();
    let spec = GridSpec::new(c(0.5, 0.0), 3.0, 3.0, 24, 18, ScanTask::FateMap);
    let a = scan_grid(fam.as_ref(), 0, &spec).unwrap();
    let b = scan_grid(fam.as_ref(), 0, &spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    render(&a, Palette::Fate, &pa).unwrap();
    render(&b, Palette::Fate, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    let header = b"P6\n24 18\n255\n";
    let bytes = std::fs::read(&pa).unwrap();
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 24 * 18 * 3);
    assert!(sidecar_path(&pa).exists());
}

#[test]
fn config_hash_tracks_the_spec() {
    let fam = builtin("quadratic").unwrap();
    let spec = GridSpec::new(c(0.0, 0.0), 1.0, 1.0, 2, 2, ScanTask::PeriodMap);
    let a = scan_grid(fam.as_ref(), 0, &spec).unwrap();
    let other = GridSpec { nx: 3, ..spec };
    let b = scan_grid(fam.as_ref(), 0, &other).unwrap();
    assert_ne!(a.metadata.config_hash, b.metadata.config_hash);
    assert_eq!(a.metadata.config_hash.len(), 16);
}

#[test]
fn refinement_keeps_decided_codes() {
    let fam = builtin("quadratic").unwrap();
    for task in [ScanTask::FateMap, ScanTask::PeriodMap] {
        let coarse = GridSpec::new(c(-0.6, 0.1), 2.8, 2.2, 14, 11, task);
        let fine = GridSpec { nx: 42, ny: 33, ..coarse };
        let a = scan_grid(fam.as_ref(), 0, &coarse).unwrap();
        let b = scan_grid(fam.as_ref(), 0, &fine).unwrap();
        let mut compared = 0;
        for j in 0..coarse.ny {
            for i in 0..coarse.nx {
                let lc = coarse.cell_center(i, j);
                let lf = fine.cell_center(3 * i + 1, 3 * j + 1);
                assert!((lc - lf).norm() < 1e-12);
                let (ca, cb) = (a.cell(i, j), b.cell(3 * i + 1, 3 * j + 1));
                if ca.code != 0 || task == ScanTask::PeriodMap {
                    assert_eq!(ca.code, cb.code, "{task:?} at {lc}");
                    compared += 1;
                }
            }
        }
        assert!(compared > 100);
    }
}

#[test]
fn hyperbolic_blocks_are_passive() {
    let fam = builtin("quadratic").unwrap();
    let period = GridSpec::new(c(-0.6, 0.0), 3.0, 2.6, 40, 35, ScanTask::PeriodMap);
    let activity = GridSpec { task: ScanTask::ActivityMap, ..period };
    let report = period_coherence(
        &scan_grid(fam.as_ref(), 0, &period).unwrap(),
        &scan_grid(fam.as_ref(), 0, &activity).unwrap(),
    )
    .unwrap();
    assert!(report.blocks > 100);
    assert_eq!(report.violations, 0);
}

#[test]
fn tiny_grids_export() {
    let fam = builtin("quadratic").unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (n, rows) in [(1, 1), (2, 4)] {
        let spec = GridSpec::new(c(-0.5, 0.0), 1.0, 1.0, n, n, ScanTask::FateMap);
        let result = scan_grid(fam.as_ref(), 0, &spec).unwrap();
        let path = dir.path().join(format!("g{n}.csv"));
        export(&result, ExportFormat::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + rows);
        assert_eq!(text.lines().next(), Some("re,im,code,value"));
    }
}
