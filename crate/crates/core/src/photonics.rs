//! Transfer-matrix models of a three-coupler MZI lattice and a serial triple-ring add-drop filter.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FSR_GHZ: f64 = 2000.0;
pub const GRID_POINTS: usize = 2001;
/// Level assigned to zero transmission.
pub const DB_FLOOR: f64 = -300.0;

pub const MZI_GAP_RANGE: (f64, f64) = (100.0, 300.0);
pub const RING_COUPLING_RANGE: (f64, f64) = (0.3, 0.6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MZIDesign {
    /// coupler gaps in nm
    pub gaps: [f64; 3],
}

impl MZIDesign {
    pub fn new(gaps: [f64; 3]) -> Result<Self> {
        check_range(&gaps, MZI_GAP_RANGE, "gap")?;
        Ok(MZIDesign { gaps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroringDesign {
    /// power coupling coefficients, bus-ring-ring-ring-bus
    pub couplings: [f64; 4],
}

impl MicroringDesign {
    pub fn new(couplings: [f64; 4]) -> Result<Self> {
        check_range(&couplings, RING_COUPLING_RANGE, "coupling")?;
        Ok(MicroringDesign { couplings })
    }
}

fn check_range(v: &[f64], (lo, hi): (f64, f64), what: &str) -> Result<()> {
    match v.iter().find(|x| !(lo..=hi).contains(*x)) {
        Some(x) => Err(Error::Config(format!("{what} {x} outside [{lo}, {hi}]"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// GHz, uniform
    pub frequency: Vec<f64>,
    /// dB
    pub drop: Vec<f64>,
    /// dB
    pub through: Vec<f64>,
}

impl Spectrum {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "frequency_ghz,drop_db,through_db")?;
        for i in 0..self.frequency.len() {
            writeln!(
                f,
                "{},{},{}",
                crate::bench::fmt17(self.frequency[i]),
                crate::bench::fmt17(self.drop[i]),
                crate::bench::fmt17(self.through[i])
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// One free spectral range centred on the drop passband.
pub fn frequency_grid() -> Vec<f64> {
    let half = FSR_GHZ / 2.0;
    (0..GRID_POINTS)
        .map(|i| -half + FSR_GHZ * i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

fn to_db(power: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Field through-coupling of a coupler with the given gap.
pub fn mzi_through_coupling(gap_nm: f64) -> f64 {
    (-gap_nm / 260.0).exp()
}

/// Coupler(τ₁)·delay·coupler(τ₂)·delay·coupler(τ₃); the drop port is the cross output.
pub fn mzi_spectrum(design: &MZIDesign, xi: &[f64]) -> Result<Spectrum> {
    if xi.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: xi.len() });
    }
    let frequency = frequency_grid();
    let thr: Vec<f64> = (0..3).map(|s| mzi_through_coupling(design.gaps[s] + xi[s])).collect();
    let crs: Vec<f64> = thr.iter().map(|t| (1.0 - t * t).max(0.0).sqrt()).collect();
    let mi = Complex64::new(0.0, -1.0);
    let mut drop = Vec::with_capacity(GRID_POINTS);
    let mut through = Vec::with_capacity(GRID_POINTS);
    for &f in &frequency {
        let phase = 2.0 * std::f64::consts::PI * f / FSR_GHZ + std::f64::consts::PI;
        let delay = Complex64::from_polar(1.0, -phase);
        let mut a = Complex64::new(1.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for s in 0..3 {
            let (na, nb) = (thr[s] * a + mi * crs[s] * b, mi * crs[s] * a + thr[s] * b);
            a = na;
            b = nb;
            if s < 2 {
                a *= delay;
            }
        }
        drop.push(to_db(b.norm_sqr()));
        through.push(to_db(a.norm_sqr()));
    }
    Ok(Spectrum { frequency, drop, through })
}

/// Serial rings between two buses; each ring's round trip is one FSR.
pub fn ring_spectrum(design: &MicroringDesign, xi: &[f64]) -> Result<Spectrum> {
    if xi.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: xi.len() });
    }
    let k: Vec<f64> = (0..4).map(|i| (design.couplings[i] + xi[i]).clamp(0.01, 0.99)).collect();
    let t: Vec<f64> = k.iter().map(|v| (1.0 - v).sqrt()).collect();
    let kf: Vec<f64> = k.iter().map(|v| v.sqrt()).collect();
    let i1 = Complex64::new(0.0, 1.0);
    let frequency = frequency_grid();
    let mut drop = Vec::with_capacity(GRID_POINTS);
    let mut through = Vec::with_capacity(GRID_POINTS);
    for &f in &frequency {
        // half round-trip phase factor
        let h = Complex64::from_polar(1.0, -std::f64::consts::PI * f / FSR_GHZ);
        // a: field entering a ring after its input coupler, b: field arriving back at it;
        // fix the last ring's field and walk back to the input bus
        let mut a = Complex64::new(1.0, 0.0);
        let mut b = t[3] * h;
        let out_drop = -i1 * kf[3] * h;
        for c in (1..3).rev() {
            let a_prev = (t[c] * b * h - a) / (i1 * kf[c] * h);
            let b_prev = t[c] * a_prev * h - i1 * kf[c] * b * h;
            a = a_prev;
            b = b_prev;
        }
        let input = (t[0] * b * h - a) / (i1 * kf[0]);
        let thr = t[0] * input - i1 * kf[0] * b * h;
        drop.push(to_db((out_drop / input).norm_sqr()));
        through.push(to_db((thr / input).norm_sqr()));
    }
    Ok(Spectrum { frequency, drop, through })
}

/// Contiguous grid run around the global peak within `level` dB of it: (lo, hi, peak).
fn band(level_db: &[f64], level: f64) -> Result<(usize, usize, usize)> {
    let k = argmax(level_db);
    let cut = level_db[k] - level;
    let (mut lo, mut hi) = (k, k);
    while lo > 0 && level_db[lo - 1] >= cut {
        lo -= 1;
    }
    while hi + 1 < level_db.len() && level_db[hi + 1] >= cut {
        hi += 1;
    }
    if lo == 0 || hi + 1 == level_db.len() {
        return Err(Error::NoBandEdge { level });
    }
    Ok((lo, hi, k))
}

/// Indices within `level` dB of the peak, walking around the period; the last grid point repeats the first.
fn periodic_band(level_db: &[f64], level: f64) -> Vec<usize> {
    let n = level_db.len() - 1;
    let k = argmax(&level_db[..n]);
    let cut = level_db[k] - level;
    let mut idx = vec![k];
    let mut j = k;
    while idx.len() < n && level_db[(j + n - 1) % n] >= cut {
        j = (j + n - 1) % n;
        idx.push(j);
    }
    j = k;
    while idx.len() < n && level_db[(j + 1) % n] >= cut {
        j = (j + 1) % n;
        if idx.contains(&j) {
            break;
        }
        idx.push(j);
    }
    idx
}

fn argmax(v: &[f64]) -> usize {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[k] {
            k = i;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MziMetrics {
    /// 3-dB drop bandwidth, GHz
    pub bw: f64,
    /// largest drop level inside the through port's 1-dB band, dB
    pub xt: f64,
    /// peak drop attenuation, dB
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMetrics {
    /// total width of the drop response within 3 dB of its peak, GHz
    pub bw: f64,
    /// peak drop level minus the lowest drop level, dB
    pub re: f64,
    /// standard deviation of the drop level over the 1-dB passband, dB
    pub sigma_pass: f64,
}

/// Crosstalk is the drop leakage across the through band: in a lossless lattice the through
/// level inside the drop band never falls below −3 dB, so that reading cannot meet a −4 dB bound.
pub fn mzi_metrics(s: &Spectrum) -> Result<MziMetrics> {
    let (lo, hi, k) = band(&s.drop, 3.0)?;
    let xt = periodic_band(&s.through, 1.0)
        .into_iter()
        .map(|i| s.drop[i])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MziMetrics {
        bw: s.frequency[hi] - s.frequency[lo],
        xt,
        alpha: -s.drop[k],
    })
}

/// Bandwidth is the total width above the 3-dB level and extinction is peak over the deepest
/// drop level: measured around the global peak only, both jump whenever the supermode peaks split.
pub fn ring_metrics(s: &Spectrum) -> Result<RingMetrics> {
    band(&s.drop, 3.0)?;
    let k = argmax(&s.drop);
    let cut = s.drop[k] - 3.0;
    let bw = s
        .frequency
        .windows(2)
        .zip(s.drop.windows(2))
        .filter(|(_, d)| d[0] >= cut && d[1] >= cut)
        .map(|(f, _)| f[1] - f[0])
        .sum();
    let floor = s.drop.iter().copied().fold(f64::INFINITY, f64::min);
    let re = s.drop[k] - floor;
    let (l1, h1, _) = band(&s.drop, 1.0)?;
    let pass = &s.drop[l1..=h1];
    let mean = pass.iter().sum::<f64>() / pass.len() as f64;
    let var = pass.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / pass.len() as f64;
    Ok(RingMetrics {
        bw,
        re,
        sigma_pass: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_sum(s: &Spectrum) -> f64 {
        s.drop
            .iter()
            .zip(&s.through)
            .map(|(d, t)| (10f64.powf(d / 10.0) + 10f64.powf(t / 10.0) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn boxcar(width: f64, floor: f64) -> Spectrum {
        let frequency = frequency_grid();
        let drop: Vec<f64> = frequency
            .iter()
            .map(|f| if f.abs() <= width / 2.0 { 0.0 } else { floor })
            .collect();
        let through = drop.iter().map(|d| if *d == 0.0 { floor } else { 0.0 }).collect();
        Spectrum { frequency, drop, through }
    }

    #[test]
    fn mzi_energy_conservation() {
        let d = MZIDesign::new([150.0, 150.0, 150.0]).unwrap();
        for xi in [[0.0; 3], [5.0, -7.0, 11.0]] {
            assert!(power_sum(&mzi_spectrum(&d, &xi).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn mzi_initial_design_metrics_finite() {
        let d = MZIDesign::new([150.0, 150.0, 150.0]).unwrap();
        let m = mzi_metrics(&mzi_spectrum(&d, &[0.0; 3]).unwrap()).unwrap();
        assert!(m.bw > 0.0 && m.bw < FSR_GHZ && m.xt.is_finite() && m.alpha >= 0.0, "{m:?}");
    }

    #[test]
    fn mzi_zero_gap_passes_nothing_to_drop() {
        // τ → 1: every coupler is a straight waveguide
        let d = MZIDesign { gaps: [1e-9; 3] };
        let s = mzi_spectrum(&d, &[0.0; 3]).unwrap();
        assert!(s.drop.iter().all(|v| *v < -100.0));
    }

    #[test]
    fn ring_energy_and_symmetric_peak() {
        let d = MicroringDesign::new([0.45; 4]).unwrap();
        let s = ring_spectrum(&d, &[0.0; 4]).unwrap();
        assert!(power_sum(&s) < 1e-9);
        let peak = s.drop.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak.abs() < 1e-9);
        let m = ring_metrics(&s).unwrap();
        assert!(m.bw.is_finite() && m.re > 0.0 && m.sigma_pass.is_finite(), "{m:?}");
    }

    #[test]
    fn boxcar_metrics() {
        let s = boxcar(100.0, -30.0);
        let m = mzi_metrics(&s).unwrap();
        assert_eq!(m.bw, 100.0);
        assert_eq!(m.alpha, 0.0);
        assert_eq!(m.xt, -30.0);
        let r = ring_metrics(&s).unwrap();
        assert_eq!(r.bw, 100.0);
        assert_eq!(r.re, 30.0);
        assert_eq!(r.sigma_pass, 0.0);
    }

    #[test]
    fn attenuated_peak() {
        let mut s = boxcar(100.0, -30.0);
        for d in &mut s.drop {
            *d -= 1.6;
        }
        assert!((mzi_metrics(&s).unwrap().alpha - 1.6).abs() < 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let d = MZIDesign::new([200.0, 150.0, 250.0]).unwrap();
        let s = mzi_spectrum(&d, &[0.0; 3]).unwrap();
        let mut shifted = s.clone();
        for f in &mut shifted.frequency {
            *f += 12.5;
        }
        assert_eq!(mzi_metrics(&s).unwrap(), mzi_metrics(&shifted).unwrap());
    }

    #[test]
    fn band_touching_grid_edge_is_an_error() {
        let s = boxcar(4000.0, -30.0);
        assert!(matches!(mzi_metrics(&s), Err(Error::NoBandEdge { .. })));
    }
}
