use micropol_core::analysis::lp_norm;
use micropol_core::config::{parse_config, parse_config_in, InitialCondition};
use micropol_core::grid::{divergence, perp_gradient, GridSpec, ScalarField};
use micropol_core::manufactured::{reference_rotation, reference_velocity};
use micropol_core::micropolar::{advect_w, FluidParams, SimState};
use micropol_core::schauder::{mollify, MollifierSpec};
use micropol_core::snapshot;
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-1.0f64..1.0, n * n)
        .prop_map(move |d| ScalarField::from_vec(GridSpec::unit(n).unwrap(), d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn perp_gradient_is_divergence_free(w in field(12)) {
        prop_assert!(divergence(&perp_gradient(&w)).max_abs() <= 1e-10);
    }

    #[test]
    fn lp_norms_are_homogeneous_and_ordered(w in field(8), a in -5.0f64..5.0) {
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            let n = lp_norm(&w, p).unwrap();
            let scaled = lp_norm(&w.scaled(a), p).unwrap();
            prop_assert!((scaled - a.abs() * n).abs() <= 1e-12 * (1.0 + n * a.abs()));
        }
        // unit-area domain: norms increase with p
        let ns: Vec<f64> = [1.0, 2.0, 4.0, 8.0, f64::INFINITY].iter().map(|&p| lp_norm(&w, p).unwrap()).collect();
        for k in 1..ns.len() {
            prop_assert!(ns[k - 1] <= ns[k] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lp_triangle_inequality(a in field(8), b in field(8)) {
        let mut s = a.clone();
        s.axpy(1.0, &b);
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let lhs = lp_norm(&s, p).unwrap();
            prop_assert!(lhs <= lp_norm(&a, p).unwrap() + lp_norm(&b, p).unwrap() + 1e-12);
        }
    }

    #[test]
    fn mollification_keeps_bounds(w in field(16), k in 1.0f64..3.0) {
        let h = w.grid.h;
        let spec = MollifierSpec::new(k * h, h).unwrap();
        let m = mollify(&w, &spec);
        prop_assert!(m.max_abs() <= w.max_abs() * (1.0 + 1e-12));
        let c = mollify(&ScalarField::constant(w.grid, 0.7), &spec);
        prop_assert!(c.data.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn narrow_mollifier_is_identity(w in field(8), k in 0.0f64..0.99) {
        let spec = MollifierSpec::new(k * w.grid.h, w.grid.h).unwrap();
        prop_assert!(spec.is_identity());
        prop_assert_eq!(mollify(&w, &spec), w);
    }

    #[test]
    fn transport_without_coupling_is_monotone(w in field(16), amp in 0.0f64..1.0) {
        let g = w.grid;
        let u = reference_velocity(g, amp);
        let params = FluidParams::new(0.1, 0.0).unwrap();
        let out = advect_w(&w, &u, params, 0.25 * g.h).unwrap();
        prop_assert!(out.max_abs() <= w.max_abs());
    }

    #[test]
    fn snapshots_round_trip(w in field(8), t in 0.0f64..10.0, amp in -1.0f64..1.0) {
        let mut s = SimState::new(reference_velocity(w.grid, amp), w).unwrap();
        s.t = t;
        prop_assert_eq!(snapshot::decode(&snapshot::encode(&s)).unwrap(), s);
    }

    #[test]
    fn snapshot_decoder_rejects_garbage(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        prop_assert!(snapshot::decode(&bytes).is_err());
    }

    #[test]
    fn config_grid_sizes_parse(n in 8usize..512, nu in 1e-4f64..10.0) {
        let c = parse_config(&format!("nx = {n}\nny = {n}\nnu = {nu:e}\n")).unwrap();
        prop_assert_eq!(c.nx, n);
        prop_assert_eq!(c.nu, nu);
    }
}

#[test]
fn snapshot_file_round_trip() {
    let g = GridSpec::new(16, 8, 2.0, 1.0).unwrap();
    let s = SimState::new(reference_velocity(g, 0.3), reference_rotation(g, 1.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.mpol");
    snapshot::write(&path, &s).unwrap();
    assert_eq!(snapshot::read(&path).unwrap(), s);
    assert!(snapshot::read(&dir.path().join("missing.mpol")).is_err());
}

#[test]
fn config_reports_every_issue_with_lines() {
    let text = "nx = 32\n# comment\nbogus = 1\nnu = -1\nnx = 16\ninitial = missing.mpol\n";
    let err = parse_config(text).unwrap_err();
    let lines: Vec<usize> = err.issues.iter().map(|i| i.line).collect();
    assert!(lines.contains(&3), "{err}");
    assert!(lines.contains(&4), "{err}");
    assert!(lines.contains(&5), "{err}");
    assert!(lines.contains(&6), "{err}");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("state.mpol"), b"").unwrap();
    let ok = parse_config_in("initial = state.mpol\n", dir.path()).unwrap();
    assert_eq!(ok.initial, InitialCondition::Snapshot(dir.path().join("state.mpol")));
}
