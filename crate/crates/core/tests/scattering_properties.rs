use std::f64::consts::PI;

use strip_spectra::scattering::{compute_b_constant, default_modes, mode_decay, phase_ladder, solve_on, transverse_shift};
use strip_spectra::{Profile, Resolution, ScatterField};

fn field(p: &Profile, length: f64, j: usize) -> ScatterField {
    solve_on(p, &Resolution::new(j).params(length, 0), default_modes(j)).unwrap()
}

#[test]
fn truncation_length_does_not_matter() {
    let hat = Profile::hat(1.0).unwrap();
    let short = field(&hat, 8.0, 16);
    let long = field(&hat, 12.0, 16);
    assert!((short.a_fit - long.a_fit).abs() < 1e-6, "{} vs {}", short.a_fit, long.a_fit);
}

#[test]
fn trace_and_fit_agree_to_discretization_error() {
    for p in [Profile::hat(1.0).unwrap(), Profile::slope(0.5).unwrap()] {
        for j in [16, 32] {
            let f = field(&p, 8.0, j);
            let rows: Vec<f64> = (0..=j).map(|r| r as f64 / j as f64).collect();
            let proxy = transverse_shift(&rows).unwrap() / (PI * PI) - 1.0;
            let gap = (f.a_trace - f.a_fit).abs();
            assert!(gap <= 3.0 * proxy, "{} J = {j}: gap {gap} vs proxy {proxy}", p.label());
        }
    }
}

#[test]
fn b_is_stable_across_cutoffs() {
    let f = field(&Profile::hat(1.0).unwrap(), 8.0, 32);
    let b2 = compute_b_constant(&f, f.a_fit, 6.0).unwrap();
    let b3 = compute_b_constant(&f, f.a_fit, 5.0).unwrap();
    assert!(b2 > 0.0);
    assert!((b2 - b3).abs() <= 0.05 * b2.abs(), "{b2} vs {b3}");
}

#[test]
fn empty_cap_has_no_b() {
    // single meshes carry an O(h^4) bias; the ladder limit vanishes
    let est = phase_ladder(&Profile::zero(), 8.0, &Resolution::new(16), 3, &[6.0]).unwrap();
    let b = est.b_limit[0].value;
    assert!(b.abs() < 1e-6, "{b}");
    assert!(est.b[0].windows(2).all(|w| w[1].abs() < w[0].abs()));
}

#[test]
fn phase_within_range_for_tested_profiles() {
    for p in [Profile::hat(0.5).unwrap(), Profile::slope(0.7).unwrap(), Profile::constant(0.2).unwrap()] {
        let est = phase_ladder(&p, 8.0, &Resolution::new(8), 3, &[]).unwrap();
        assert!(est.a.value >= -1e-3 && est.a.value <= p.max() + 1e-3, "{}: {}", p.label(), est.a.value);
        assert!(est.a.monotone);
    }
}

#[test]
fn second_mode_decays_at_sqrt3_pi() {
    let f = field(&Profile::slope(1.0).unwrap(), 8.0, 32);
    let d = mode_decay(&f, 2).unwrap();
    let target = 3f64.sqrt() * PI;
    let rate = d.rate.expect("mode present");
    assert!(((rate - target) / target).abs() < 0.1, "{rate} vs {target}");
}
