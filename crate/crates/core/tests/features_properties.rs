use strip_spectra::features::{figure2_experiment, locate_maximum, localization, nodal_curve, Figure2Config};
use strip_spectra::spectra::{compute_eigenpairs, eigen_ladder};
use strip_spectra::{Profile, Resolution};

#[test]
fn rectangle_nodal_line_is_the_midline() {
    let lad = eigen_ladder(&Profile::zero(), 8.0, 2, &Resolution::new(8), 3).unwrap();
    let h = 1.0 / 32.0;
    let finest = &lad.row_crossings[2][1];
    for x in finest.iter().filter(|x| x.is_finite()) {
        assert!((x - 4.0).abs() < h * h, "{x}");
    }
    let loc = localization(&lad, 0.0).unwrap();
    assert!(loc.nodal_deviation < 1e-6, "{loc:?}");
    assert!(loc.max_deviation < 1e-6, "{loc:?}");
}

#[test]
fn nodal_curve_separates_the_domain() {
    let n = 8.0;
    let f = compute_eigenpairs(&Profile::slope(1.0).unwrap(), n, 2, &Resolution::new(16).params(n, 0)).unwrap();
    let left = f.fields[1][f.mesh.nearest_node(1.0, 0.5)];
    let right = f.fields[1][f.mesh.nearest_node(n - 1.0, 0.5)];
    assert!(left * right < 0.0, "{left} {right}");
    let c = nodal_curve(&f.mesh, &f.fields[1]).unwrap();
    let nodes = f.mesh.nodes();
    let (xlo, xhi) = nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
    for s in &c.segments {
        for p in s {
            assert!(p[0] >= xlo && p[0] <= xhi && (0.0..=1.0).contains(&p[1]));
        }
    }
}

#[test]
fn hat_nodal_curve_is_symmetric_in_y() {
    let j = 16;
    let lad = eigen_ladder(&Profile::hat(1.0).unwrap(), 8.0, 2, &Resolution::new(j), 1).unwrap();
    let rows = &lad.row_crossings[0][1];
    let h = 1.0 / j as f64;
    for r in 1..j {
        let (lo, hi) = (rows[r], rows[j - r]);
        assert!((lo - hi).abs() <= h, "row {r}: {lo} vs {hi}");
    }
}

#[test]
fn second_mode_is_required_for_localization() {
    let lad = eigen_ladder(&Profile::hat(1.0).unwrap(), 6.0, 1, &Resolution::new(8), 1).unwrap();
    assert!(localization(&lad, 0.25).is_err());
}

#[test]
fn ground_state_maximum_sits_on_the_midline() {
    let n = 8.0;
    let f = compute_eigenpairs(&Profile::hat(1.0).unwrap(), n, 1, &Resolution::new(16).params(n, 0)).unwrap();
    let m = locate_maximum(&f.mesh, &f.fields[0]).unwrap();
    assert!((m.y - 0.5).abs() < 1.0 / 16.0, "{m:?}");
    assert!(m.x > n / 3.0 && m.x < 2.0 * n / 3.0, "{m:?}");
    assert!(f.fields[0].iter().all(|v| *v <= m.value + 1e-12));
}

#[test]
fn figure2_outputs_are_plot_ready() {
    let cfg = Figure2Config {
        scatter_base: Resolution::new(8),
        eigen_base: Resolution::new(8),
        ..Figure2Config::default()
    };
    let r = figure2_experiment(0.5, 8.0, &cfg).unwrap();
    assert_eq!(r.height_max_diff, 0.0);
    assert!(r.a_hat > r.a_slope);
    assert!(r.nodal_shift > 0.0 && r.max_shift > 0.0);
    let mut csv = Vec::new();
    r.write_plot_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("profile,kind,part,x,y\n"));
    assert!(text.lines().any(|l| l.contains(",outline,")));
    assert!(text.lines().any(|l| l.contains(",nodal,")));
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert!(json["ratio"].as_f64().is_some());
}

#[test]
fn figure2_rejects_bad_eps() {
    assert!(figure2_experiment(0.0, 12.0, &Figure2Config::default()).is_err());
    assert!(figure2_experiment(1.5, 12.0, &Figure2Config::default()).is_err());
}
