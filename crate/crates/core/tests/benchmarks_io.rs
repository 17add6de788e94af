use icmor::benchmarks::{convdiff_generate, convdiff_initial_state, ConvDiffConfig};
use icmor::io::{export_system, import_system, read_dense, write_dense, SystemManifest};
use icmor::system::{rightmost_eigenvalue_estimate, LtiSystem, ReducedModel, SplitRom};
use nalgebra::{DMatrix, DVector};

#[test]
fn convdiff_output_rows_mirror_and_sum_to_cell_areas() {
    for m in [9, 19, 40] {
        let cfg = ConvDiffConfig::new(m).unwrap();
        let (sys, _) = convdiff_generate(&cfg).unwrap();
        let h2 = cfg.h() * cfg.h();
        for l in 0..9 {
            let row = sys.c.row(l);
            let members = row.iter().filter(|&&v| v != 0.0).count();
            assert!(row.iter().all(|&v| v == 0.0 || v == h2));
            assert!((row.sum() - h2 * members as f64).abs() <= 1e-15);
            let mirror = sys.c.row(8 - l);
            let count = |r: nalgebra::RowDVector<f64>| r.iter().filter(|&&v| v != 0.0).count();
            assert_eq!(members, count(mirror.into_owned()), "grid {m}, rows {} and {}", l + 1, 9 - l);
        }
    }
}

#[test]
fn convdiff_training_matrix_columns() {
    let cfg = ConvDiffConfig::new(12).unwrap();
    let (_, x0) = convdiff_generate(&cfg).unwrap();
    assert_eq!(x0.ncols(), 21);
    for k in 0..21 {
        let mu = 2.0 + k as f64 / 20.0;
        let col = convdiff_initial_state(mu, &cfg).unwrap();
        assert_eq!(x0.column(k), col.column(0));
    }
}

#[test]
fn convdiff_is_hurwitz() {
    for m in [3, 10, 25] {
        let (sys, _) = convdiff_generate(&ConvDiffConfig::new(m).unwrap()).unwrap();
        assert!(sys.stability().unwrap().is_hurwitz(), "grid {m}");
    }
    let (sys, _) = convdiff_generate(&ConvDiffConfig::new(60).unwrap()).unwrap();
    assert!(rightmost_eigenvalue_estimate(&sys.a).unwrap().re < 0.0);
}

#[test]
fn system_round_trips_through_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ConvDiffConfig::new(6).unwrap();
    let (sys, x0) = convdiff_generate(&cfg).unwrap();
    assert_eq!(sys.b.shape(), (36, 0));
    export_system(dir.path(), &SystemManifest::for_system("convdiff", &sys), &sys, Some(&x0)).unwrap();
    let loaded = import_system(dir.path()).unwrap();
    assert_eq!(loaded.system.a.to_dense(), sys.a.to_dense());
    assert_eq!(loaded.system.b.shape(), (36, 0));
    assert_eq!(loaded.system.c, sys.c);
    assert_eq!(loaded.system.x0, sys.x0);
    assert_eq!(loaded.training.unwrap(), x0);
    assert_eq!(loaded.manifest.state_dim, 36);
}

#[test]
fn dense_matrices_keep_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mtx");
    let m = DMatrix::from_row_slice(2, 3, &[1.0 / 3.0, -2e-300, 0.0, std::f64::consts::PI, 1e300, -0.1]);
    write_dense(&path, &m).unwrap();
    assert_eq!(read_dense(&path).unwrap(), m);
}

#[test]
fn missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_dense(&dir.path().join("absent.mtx")).unwrap_err();
    assert!(err.to_string().contains("absent.mtx"));
}

#[test]
fn combined_split_rom_sums_outputs() {
    let uc = ReducedModel {
        ar: DMatrix::from_element(1, 1, -1.0),
        br: DMatrix::zeros(1, 1),
        cr: DMatrix::from_element(1, 1, 2.0),
        w: None,
        v: None,
        x0r: DVector::from_element(1, 3.0),
    };
    let c = ReducedModel {
        ar: DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -3.0]),
        br: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        cr: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        w: None,
        v: None,
        x0r: DVector::zeros(2),
    };
    let split = SplitRom { uncontrolled: uc, controlled: c };
    let full = split.combined();
    assert_eq!(split.order(), 3);
    assert_eq!(full.ar, DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -2.0, 1.0, 0.0, 0.0, -3.0]));
    assert_eq!(full.br, DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 1.0]));
    assert_eq!(full.cr, DMatrix::from_row_slice(1, 3, &[2.0, 1.0, -1.0]));
    assert_eq!(full.x0r, DVector::from_column_slice(&[3.0, 0.0, 0.0]));
    assert!(full.w.is_none());
    let as_sys: LtiSystem = full.as_system();
    assert_eq!(as_sys.state_dim(), 3);
}

#[test]
fn coarsest_grid_observes_only_the_centre_node() {
    let cfg = ConvDiffConfig::new(3).unwrap();
    let (sys, _) = convdiff_generate(&cfg).unwrap();
    for l in 0..9 {
        let nz: Vec<usize> = (0..9).filter(|&k| sys.c[(l, k)] != 0.0).collect();
        if l == 4 {
            assert_eq!(nz, vec![4]);
            assert_eq!(sys.c[(4, 4)], 1.0 / 16.0);
        } else {
            assert!(nz.is_empty(), "row {}", l + 1);
        }
    }
}
