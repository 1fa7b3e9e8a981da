//! Temporal downsampling and zero-phase bandpass filtering.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FieldGrid;

pub const DEFAULT_TAPER_FRAC: f64 = 0.1;

/// Passband `[f_lo, f_hi]` in Hz with raised-cosine edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Edge width as a fraction of the band width.
    pub taper_frac: f64,
}

impl BandpassSpec {
    pub fn new(f_lo: f64, f_hi: f64) -> Self {
        Self {
            f_lo,
            f_hi,
            taper_frac: DEFAULT_TAPER_FRAC,
        }
    }

    pub fn with_taper(mut self, taper_frac: f64) -> Self {
        self.taper_frac = taper_frac;
        self
    }

    fn validate(&self, dt: f64) -> Result<()> {
        let nyquist = 0.5 / dt;
        if !(self.f_lo >= 0.0 && self.f_lo < self.f_hi) {
            return Err(Error::param(format!(
                "band must satisfy 0 <= f_lo < f_hi, got [{}, {}]",
                self.f_lo, self.f_hi
            )));
        }
        if self.f_hi > nyquist {
            return Err(Error::param(format!(
                "f_hi = {} Hz exceeds the Nyquist frequency {nyquist} Hz",
                self.f_hi
            )));
        }
        if !(0.0..=0.5).contains(&self.taper_frac) {
            return Err(Error::param(format!(
                "taper_frac must lie in [0, 0.5], got {}",
                self.taper_frac
            )));
        }
        Ok(())
    }

    /// Gain applied at frequency `|f|`.
    pub fn gain(&self, f: f64) -> f64 {
        let f = f.abs();
        let w = self.taper_frac * (self.f_hi - self.f_lo);
        let edge = |dist: f64| -> f64 {
            // dist runs from -w/2 (stop side) to +w/2 (pass side)
            if dist <= -0.5 * w {
                0.0
            } else if dist >= 0.5 * w {
                1.0
            } else {
                0.5 * (1.0 - (PI * (dist + 0.5 * w) / w).cos())
            }
        };
        let lower = if self.f_lo == 0.0 {
            1.0
        } else if w == 0.0 {
            if f >= self.f_lo { 1.0 } else { 0.0 }
        } else {
            edge(f - self.f_lo)
        };
        let upper = if w == 0.0 {
            if f <= self.f_hi { 1.0 } else { 0.0 }
        } else {
            edge(self.f_hi - f)
        };
        lower * upper
    }
}

/// Keeps time samples `0, factor, 2*factor, ...`.
pub fn downsample_time(grid: &FieldGrid, factor: usize) -> Result<FieldGrid> {
    if factor < 1 {
        return Err(Error::param("downsample factor must be >= 1"));
    }
    if grid.n_t() < factor {
        return Err(Error::param(format!(
            "downsample factor {factor} exceeds the {} available time samples",
            grid.n_t()
        )));
    }
    let cols: Vec<usize> = (0..grid.n_t()).step_by(factor).collect();
    grid.select_time(&cols)
}

/// Zero-phase FFT-mask bandpass applied to every spatial row independently.
///
/// Rows are demeaned first and the mean is not restored.
pub fn bandpass(grid: &FieldGrid, spec: &BandpassSpec) -> Result<FieldGrid> {
    let nt = grid.n_t();
    if nt < 2 {
        return Err(Error::param("bandpass needs at least two time samples"));
    }
    let dt = grid.dt();
    spec.validate(dt)?;

    let mask: Vec<f64> = (0..nt)
        .map(|k| {
            let kk = if k <= nt / 2 { k as f64 } else { k as f64 - nt as f64 };
            spec.gain(kk / (nt as f64 * dt))
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let values = grid.values();
    let rows: Vec<Vec<f64>> = (0..grid.n_x())
        .into_par_iter()
        .map(|n| {
            let row = values.row(n);
            let mean = row.iter().sum::<f64>() / nt as f64;
            let mut buf: Vec<Complex64> =
                row.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
            fwd.process(&mut buf);
            for (b, g) in buf.iter_mut().zip(&mask) {
                *b *= *g;
            }
            inv.process(&mut buf);
            buf.iter().map(|c| c.re / nt as f64).collect()
        })
        .collect();

    let out = DMatrix::from_fn(grid.n_x(), nt, |n, m| rows[n][m]);
    grid.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_grid(dt: f64, nt: usize, tones: &[(f64, f64)]) -> FieldGrid {
        FieldGrid::from_fn((0.0, 1.0, 2), (0.0, dt, nt), |x, t| {
            tones
                .iter()
                .map(|&(a, f)| a * (2.0 * PI * f * t + 0.3 * x).sin())
                .sum()
        })
        .unwrap()
    }

    fn rms(v: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    }

    #[test]
    fn factor_one_is_identity() {
        let g = tone_grid(1e-3, 17, &[(1.0, 5.0)]);
        assert_eq!(downsample_time(&g, 1).unwrap(), g);
    }

    #[test]
    fn factor_equal_to_length_keeps_one_sample() {
        let g = tone_grid(1e-3, 10, &[(1.0, 5.0)]);
        assert_eq!(downsample_time(&g, 10).unwrap().n_t(), 1);
        assert!(downsample_time(&g, 0).is_err());
    }

    #[test]
    fn downsampling_multiplies_dt() {
        let g = tone_grid(1.6e-8, 1000, &[(1.0, 1e4)]);
        let d = downsample_time(&g, 10).unwrap();
        assert_eq!(d.n_t(), 100);
        assert!((d.dt() - 1.6e-7).abs() < 1e-20);
    }

    // 2000 samples at dt = 2.5e-6 s: bin width 200 Hz, all test tones bin-centred.
    const DT: f64 = 2.5e-6;
    const NT: usize = 2000;

    #[test]
    fn passband_tone_amplitude_preserved() {
        let g = tone_grid(DT, NT, &[(1.0, 10e3)]);
        let f = bandpass(&g, &BandpassSpec::new(4e3, 16e3)).unwrap();
        let ratio = rms(f.values().iter().copied()) / rms(g.values().iter().copied());
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn stopband_tone_is_removed() {
        let g = tone_grid(DT, NT, &[(1.0, 30e3)]);
        let f = bandpass(&g, &BandpassSpec::new(4e3, 16e3)).unwrap();
        let ratio = rms(f.values().iter().copied()) / rms(g.values().iter().copied());
        assert!(ratio < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn low_tone_recovered_from_mixture() {
        // 3 kHz is not bin-centred here (bin width 1/(8100*2.5e-6) = 49.4 Hz).
        let nt = 8100;
        let g = tone_grid(DT, nt, &[(1.0, 3e3), (0.7, 20e3)]);
        let pure = tone_grid(DT, nt, &[(1.0, 3e3)]);
        let f = bandpass(&g, &BandpassSpec::new(1e3, 5e3)).unwrap();
        let lo = nt / 4;
        let hi = nt - nt / 4;
        for n in 0..2 {
            // DC is outside the band, so compare against the demeaned tone
            let mean = pure.values().row(n).mean();
            let resid = rms((lo..hi).map(|m| f.values()[(n, m)] - pure.values()[(n, m)] + mean));
            let refr = rms((lo..hi).map(|m| pure.values()[(n, m)]));
            assert!(resid / refr < 0.01, "row {n}: {}", resid / refr);
        }
    }

    #[test]
    fn band_above_nyquist_is_rejected() {
        let g = tone_grid(DT, 64, &[(1.0, 1e3)]);
        assert!(matches!(
            bandpass(&g, &BandpassSpec::new(1e3, 0.6 / DT)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn filter_is_zero_phase() {
        // A bin-centred tone must come back with no shift.
        let g = tone_grid(DT, NT, &[(1.0, 8e3)]);
        let f = bandpass(&g, &BandpassSpec::new(4e3, 16e3)).unwrap();
        let err = (f.values() - g.values()).amax();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn gain_profile() {
        let s = BandpassSpec::new(4e3, 16e3);
        assert_eq!(s.gain(10e3), 1.0);
        assert_eq!(s.gain(-10e3), 1.0);
        assert_eq!(s.gain(3e3), 0.0);
        assert_eq!(s.gain(17e3), 0.0);
        assert!((s.gain(4e3) - 0.5).abs() < 1e-12);
        assert!((s.gain(16e3) - 0.5).abs() < 1e-12);
    }
}
