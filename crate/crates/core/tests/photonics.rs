use pobo::photonics::{
    frequency_grid, mzi_metrics, mzi_spectrum, mzi_through_coupling, ring_metrics, ring_spectrum, MZIDesign,
    MicroringDesign, Spectrum,
};
use proptest::prelude::*;

fn power_sum(s: &Spectrum) -> f64 {
    s.drop
        .iter()
        .zip(&s.through)
        .map(|(d, t)| (10f64.powf(d / 10.0) + 10f64.powf(t / 10.0) - 1.0).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mzi_conserves_energy(g in prop::array::uniform3(100.0..300.0f64), xi in prop::array::uniform3(-30.0..30.0f64)) {
        let s = mzi_spectrum(&MZIDesign::new(g).unwrap(), &xi).unwrap();
        prop_assert!(power_sum(&s) <= 1e-9);
    }

    #[test]
    fn ring_conserves_energy(k in prop::array::uniform4(0.3..0.6f64), xi in prop::array::uniform4(-0.1..0.1f64)) {
        let s = ring_spectrum(&MicroringDesign::new(k).unwrap(), &xi).unwrap();
        prop_assert!(power_sum(&s) <= 1e-9);
    }

    #[test]
    fn mzi_metrics_are_finite_in_the_box(g in prop::array::uniform3(100.0..300.0f64)) {
        let m = mzi_metrics(&mzi_spectrum(&MZIDesign::new(g).unwrap(), &[0.0; 3]).unwrap()).unwrap();
        prop_assert!(m.bw.is_finite() && m.xt.is_finite() && m.alpha.is_finite() && m.alpha >= 0.0);
    }

    #[test]
    fn ring_metrics_are_finite_in_the_box(k in prop::array::uniform4(0.3..0.6f64)) {
        let m = ring_metrics(&ring_spectrum(&MicroringDesign::new(k).unwrap(), &[0.0; 4]).unwrap()).unwrap();
        prop_assert!(m.bw > 0.0 && m.re > 0.0 && m.sigma_pass >= 0.0);
    }
}

#[test]
fn designs_are_range_checked() {
    assert!(MZIDesign::new([99.0, 150.0, 150.0]).is_err());
    assert!(MicroringDesign::new([0.45, 0.45, 0.45, 0.7]).is_err());
}

#[test]
fn initial_mzi_design_has_finite_metrics() {
    let m = mzi_metrics(&mzi_spectrum(&MZIDesign::new([150.0; 3]).unwrap(), &[0.0; 3]).unwrap()).unwrap();
    assert!(m.bw > 0.0 && m.xt.is_finite() && m.alpha.is_finite());
}

#[test]
fn weak_coupling_limit() {
    assert!(mzi_through_coupling(1e-6) > 0.999_999);
    // perturbations closing the gaps give τ → 1, so nothing crosses to the drop port
    let s = mzi_spectrum(&MZIDesign::new([300.0; 3]).unwrap(), &[-300.0; 3]).unwrap();
    assert!(s.drop.iter().all(|d| *d < -100.0));
}

#[test]
fn symmetric_rings_peak_near_zero() {
    let s = ring_spectrum(&MicroringDesign::new([0.45; 4]).unwrap(), &[0.0; 4]).unwrap();
    let peak = s.drop.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(peak.abs() < 1e-6);
    assert!(ring_metrics(&s).unwrap().re > 0.0);
}

fn boxcar(width: f64, peak: f64, floor: f64, offset: f64) -> Spectrum {
    let frequency: Vec<f64> = frequency_grid().into_iter().map(|f| f + offset).collect();
    let center = frequency[frequency.len() / 2];
    let drop: Vec<f64> =
        frequency.iter().map(|f| if (f - center).abs() <= width / 2.0 { peak } else { floor }).collect();
    let through = drop.iter().map(|d| if *d == peak { floor } else { 0.0 }).collect();
    Spectrum { frequency, drop, through }
}

#[test]
fn boxcar_metrics() {
    let m = mzi_metrics(&boxcar(100.0, 0.0, -30.0, 0.0)).unwrap();
    assert!((m.bw - 100.0).abs() < 1e-9 && m.alpha == 0.0);
    let r = ring_metrics(&boxcar(100.0, 0.0, -30.0, 0.0)).unwrap();
    assert!((r.re - 30.0).abs() < 1e-12 && r.sigma_pass == 0.0);
    assert!((mzi_metrics(&boxcar(100.0, -1.6, -30.0, 0.0)).unwrap().alpha - 1.6).abs() < 1e-12);
}

#[test]
fn metrics_ignore_frequency_offset() {
    let s = mzi_spectrum(&MZIDesign::new([180.0, 140.0, 220.0]).unwrap(), &[0.0; 3]).unwrap();
    let mut shifted = s.clone();
    shifted.frequency.iter_mut().for_each(|f| *f += 1234.5);
    let (a, b) = (mzi_metrics(&s).unwrap(), mzi_metrics(&shifted).unwrap());
    assert!((a.bw - b.bw).abs() < 1e-9 && a.xt == b.xt && a.alpha == b.alpha);
}

#[test]
fn spectrum_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let s = ring_spectrum(&MicroringDesign::new([0.45; 4]).unwrap(), &[0.0; 4]).unwrap();
    s.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frequency_ghz,drop_db,through_db"));
    assert_eq!(lines.count(), s.frequency.len());
}
