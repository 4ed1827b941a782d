//! Time-series containers, Fourier frequency grids and FFT periodograms.
//!
//! Frequencies are in cycles per sample. Only the strictly positive,
//! sub-Nyquist Fourier frequencies `j / n`, `j = 1..=(n - 1) / 2`, are kept:
//! the periodogram of a real series is even in frequency and is identically
//! zero at `j = 0` once the series is demeaned.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest series length accepted anywhere in the toolkit.
pub const MIN_SERIES_LEN: usize = 8;

/// Relative floor applied to periodogram ordinates before taking logs.
pub const ORDINATE_FLOOR: f64 = 1e-12;

/// Relative tolerance of the internal Parseval check.
const PARSEVAL_TOL: f64 = 1e-8;

/// An `n x m` panel of observations, one column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSet {
    values: DMatrix<f64>,
    sample_rate: Option<f64>,
    labels: Vec<String>,
}

impl TimeSeriesSet {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|i| format!("s{i}")).collect();
        Self::with_labels(values, labels)
    }

    pub fn with_labels(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, m) = values.shape();
        if n < MIN_SERIES_LEN {
            return Err(Error::Size(format!(
                "series length {n} is below the minimum of {MIN_SERIES_LEN}"
            )));
        }
        if m == 0 {
            return Err(Error::Size("at least one series is required".into()));
        }
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "{} labels supplied for {m} series",
                labels.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            values,
            sample_rate: None,
            labels,
        })
    }

    pub fn with_sample_rate(mut self, rate: f64) -> Self {
        self.sample_rate = Some(rate);
        self
    }

    /// Builds a panel from equally long column vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        if m == 0 {
            return Err(Error::Size("at least one series is required".into()));
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::Shape(format!(
                "series {bad} has length {} but series 0 has length {n}",
                columns[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, m, |t, i| columns[i][t]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }
}

fn check_finite(values: &DMatrix<f64>) -> Result<()> {
    for (column, col) in values.column_iter().enumerate() {
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column, row });
        }
    }
    Ok(())
}

/// Positive Fourier frequencies `j / n` for `j = 1..=(n - 1) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    source_n: usize,
}

impl FrequencyGrid {
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    /// Keeps the lowest `keep` frequencies.
    pub fn prefix(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.omegas.len() {
            return Err(Error::Size(format!(
                "cannot keep {keep} of {} frequencies",
                self.omegas.len()
            )));
        }
        Ok(Self {
            omegas: self.omegas[..keep].to_vec(),
            source_n: self.source_n,
        })
    }
}

pub fn fourier_grid(n: usize) -> Result<FrequencyGrid> {
    if n < MIN_SERIES_LEN {
        return Err(Error::Size(format!(
            "series length {n} is below the minimum of {MIN_SERIES_LEN}"
        )));
    }
    let count = (n - 1) / 2;
    Ok(FrequencyGrid {
        omegas: (1..=count).map(|j| j as f64 / n as f64).collect(),
        source_n: n,
    })
}

/// Periodogram ordinates on a shared positive frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodogramSet {
    ordinates: DMatrix<f64>,
    grid: FrequencyGrid,
}

impl PeriodogramSet {
    pub fn new(ordinates: DMatrix<f64>, grid: FrequencyGrid) -> Result<Self> {
        if ordinates.nrows() != grid.len() {
            return Err(Error::Shape(format!(
                "{} ordinate rows for a grid of {} frequencies",
                ordinates.nrows(),
                grid.len()
            )));
        }
        if ordinates.ncols() == 0 {
            return Err(Error::Size("at least one series is required".into()));
        }
        check_finite(&ordinates)?;
        if ordinates.iter().any(|&v| v < 0.0) {
            return Err(Error::Numerical {
                message: "periodogram ordinates must be non-negative".into(),
            });
        }
        Ok(Self { ordinates, grid })
    }

    pub fn ordinates(&self) -> &DMatrix<f64> {
        &self.ordinates
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn n_freq(&self) -> usize {
        self.ordinates.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.ordinates.ncols()
    }

    /// Ordinates floored at `1e-12` times each series' largest ordinate.
    pub fn floored(&self) -> DMatrix<f64> {
        let mut out = self.ordinates.clone();
        for mut col in out.column_iter_mut() {
            let max = col.iter().cloned().fold(0.0_f64, f64::max);
            let eps = (ORDINATE_FLOOR * max).max(f64::MIN_POSITIVE);
            col.iter_mut().for_each(|v| *v = v.max(eps));
        }
        out
    }

    /// Elementwise log of the floored ordinates.
    pub fn log_floored(&self) -> DMatrix<f64> {
        self.floored().map(f64::ln)
    }
}

pub fn demean(ts: &TimeSeriesSet) -> Result<TimeSeriesSet> {
    check_finite(&ts.values)?;
    let mut values = ts.values.clone();
    for mut col in values.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(TimeSeriesSet {
        values,
        sample_rate: ts.sample_rate,
        labels: ts.labels.clone(),
    })
}

/// Full-grid periodogram `|sum_t x_t exp(-2 pi i j t / n)|^2 / n` for
/// `j = 0..n`, computed with an FFT.
pub fn full_periodogram(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    buf.iter().map(|z| z.norm_sqr() / n as f64).collect()
}

pub fn periodogram(ts: &TimeSeriesSet) -> Result<PeriodogramSet> {
    let centered = demean(ts)?;
    let n = centered.len();
    let grid = fourier_grid(n)?;
    let n_freq = grid.len();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);

    let values = &centered.values;
    let columns: Vec<Vec<f64>> = (0..values.ncols())
        .into_par_iter()
        .map(|i| {
            let col = values.column(i);
            let mut buf: Vec<Complex64> = col.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.process(&mut buf);
            let full: Vec<f64> = buf.iter().map(|z| z.norm_sqr() / n as f64).collect();

            let energy: f64 = col.iter().map(|x| x * x).sum();
            let total: f64 = full.iter().sum();
            if (total - energy).abs() > PARSEVAL_TOL * energy.max(f64::MIN_POSITIVE) {
                return Err(Error::numerical(format!(
                    "Parseval check failed for series {i}: {total} vs {energy}"
                )));
            }
            Ok(full[1..=n_freq].to_vec())
        })
        .collect::<Result<_>>()?;

    let ordinates = DMatrix::from_fn(n_freq, columns.len(), |j, i| columns[i][j]);
    Ok(PeriodogramSet { ordinates, grid })
}

pub fn truncate_band(ps: &PeriodogramSet, keep: usize) -> Result<PeriodogramSet> {
    let grid = ps.grid.prefix(keep)?;
    Ok(PeriodogramSet {
        ordinates: ps.ordinates.rows(0, keep).into_owned(),
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(series: &[f64]) -> Vec<f64> {
        let n = series.len();
        (0..n)
            .map(|j| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in series.iter().enumerate() {
                    let arg = -2.0 * PI * (j * t % n) as f64 / n as f64;
                    re += x * arg.cos();
                    im += x * arg.sin();
                }
                (re * re + im * im) / n as f64
            })
            .collect()
    }

    #[test]
    fn grid_counts() {
        assert_eq!(fourier_grid(8).unwrap().omegas(), &[0.125, 0.25, 0.375]);
        let g9 = fourier_grid(9).unwrap();
        assert_eq!(g9.len(), 4);
        assert_eq!(g9.omegas()[3], 4.0 / 9.0);
        let g = fourier_grid(400).unwrap();
        assert_eq!(g.len(), 199);
        assert_eq!(*g.omegas().last().unwrap(), 199.0 / 400.0);
        assert!(matches!(fourier_grid(7), Err(Error::Size(_))));
    }

    #[test]
    fn demean_cases() {
        let ts = TimeSeriesSet::from_columns(&[
            vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0],
            vec![5.0; 9],
        ])
        .unwrap();
        let d = demean(&ts).unwrap();
        assert_eq!(d.values().column(0).iter().take(3).copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(d.values().column(1).iter().all(|&v| v == 0.0));
        let again = demean(&d).unwrap();
        assert_eq!(again.values(), d.values());
    }

    #[test]
    fn rejects_non_finite() {
        let mut v = DMatrix::zeros(10, 2);
        v[(4, 1)] = f64::NAN;
        assert!(matches!(TimeSeriesSet::new(v), Err(Error::NonFinite { column: 1, row: 4 })));
    }

    #[test]
    fn cosine_fixture() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * 8.0 * t as f64 / n as f64).cos()).collect();
        let ps = periodogram(&TimeSeriesSet::from_columns(&[x]).unwrap()).unwrap();
        for (j, &v) in ps.ordinates().column(0).iter().enumerate() {
            let expected = if j + 1 == 8 { 16.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-9, "j = {}: {v}", j + 1);
        }
    }

    #[test]
    fn zero_series() {
        let ps = periodogram(&TimeSeriesSet::new(DMatrix::zeros(16, 2)).unwrap()).unwrap();
        assert!(ps.ordinates().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fft_matches_naive_and_parseval() {
        for n in [8, 9, 17, 64, 100] {
            let x: Vec<f64> = (0..n).map(|t| ((t * 7919) % 31) as f64 / 7.0 - 2.0).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
            let fast = full_periodogram(&x);
            let slow = naive(&x);
            let scale = slow.iter().cloned().fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
            let energy: f64 = x.iter().map(|v| v * v).sum();
            assert!((fast.iter().sum::<f64>() - energy).abs() <= 1e-10 * energy);
            for j in 1..n {
                assert!((fast[j] - fast[n - j]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn truncation() {
        let x: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin()).collect();
        let ps = periodogram(&TimeSeriesSet::from_columns(&[x]).unwrap()).unwrap();
        assert_eq!(truncate_band(&ps, ps.n_freq()).unwrap(), ps);
        let one = truncate_band(&ps, 1).unwrap();
        assert_eq!(one.n_freq(), 1);
        assert_eq!(one.grid().omegas(), &[1.0 / 50.0]);
        assert!(truncate_band(&ps, ps.n_freq() + 1).is_err());
    }

    #[test]
    fn floor_is_relative() {
        let grid = fourier_grid(8).unwrap();
        let ps = PeriodogramSet::new(DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 1.0]), grid).unwrap();
        let f = ps.floored();
        assert_eq!(f[(0, 0)], 2e-12);
        assert_eq!(f[(1, 0)], 2.0);
    }
}
