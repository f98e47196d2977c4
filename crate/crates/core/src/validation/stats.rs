//! Empirical distribution functions, Kolmogorov–Smirnov distances,
//! histogram z-scores and Monte Carlo summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical CDF of a finite sample.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("NaN in sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of the sample `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Empirical quantile (lower median convention).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let i = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.sorted[i]
    }
}

/// `sup_x |F_n(x) - F(x)|` for a right-continuous `cdf`. Left limits of
/// `cdf` at sample points are taken one ulp to the left, so atoms of the
/// target law are handled correctly.
pub fn ks_distance<F: Fn(f64) -> f64>(ecdf: &Ecdf, cdf: F) -> f64 {
    let s = &ecdf.sorted;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut below = 0.0;
    let mut i = 0;
    while i < s.len() {
        let v = s[i];
        let mut j = i;
        while j < s.len() && s[j] == v {
            j += 1;
        }
        let above = j as f64 / n;
        d = d.max((below - cdf(v.next_down())).abs()).max((above - cdf(v)).abs());
        below = above;
        i = j;
    }
    d
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Sum with pairwise splitting (error grows like `log n`).
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Summary of one Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub label: String,
    pub estimate: f64,
    pub ci95: (f64, f64),
    pub std_error: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub censored_fraction: f64,
}

const Z95: f64 = 1.959_963_984_540_054;

impl McReport {
    /// Sample mean with a normal-approximation interval.
    pub fn mean(label: &str, samples: &[f64], seed: u64, censored_fraction: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = samples.len() as f64;
        let m = pairwise_sum(samples) / n;
        let dev: Vec<f64> = samples.iter().map(|x| (x - m) * (x - m)).collect();
        let var = if samples.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
        let se = (var / n).sqrt();
        Ok(McReport {
            label: label.to_string(),
            estimate: m,
            ci95: (m - Z95 * se, m + Z95 * se),
            std_error: se,
            n_reps: samples.len(),
            seed,
            censored_fraction,
        })
    }

    /// Proportion with a Wilson score interval.
    pub fn proportion(label: &str, successes: usize, n: usize, seed: u64, censored_fraction: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let nf = n as f64;
        let p = successes as f64 / nf;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Ok(McReport {
            label: label.to_string(),
            estimate: p,
            ci95: ((centre - half).min(p), (centre + half).max(p)),
            std_error: (p * (1.0 - p) / nf).sqrt(),
            n_reps: n,
            seed,
            censored_fraction,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci95.1 - self.ci95.0)
    }

    /// True when the two 95% intervals intersect.
    pub fn overlaps(&self, other: &McReport) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }

    /// `|estimate - value|` in units of the standard error.
    pub fn sigmas_from(&self, value: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.estimate - value).abs() / self.std_error
        } else if self.estimate == value {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// One histogram cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinZ {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub observed: usize,
    pub expected: f64,
    pub z: f64,
    pub flagged: bool,
}

/// Per-bin comparison of observed counts with expected counts. Cells with
/// expected count below 1 are excluded from flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bins: Vec<BinZ>,
    pub considered: usize,
    pub flagged: usize,
    pub max_abs_z: f64,
}

impl HistogramReport {
    pub fn flagged_fraction(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            self.flagged as f64 / self.considered as f64
        }
    }

    fn from_cells(cells: Vec<(Vec<f64>, Vec<f64>, usize, f64)>) -> Self {
        let mut bins = Vec::with_capacity(cells.len());
        let (mut considered, mut flagged, mut max_abs_z) = (0, 0, 0.0f64);
        for (lo, hi, observed, expected) in cells {
            let z = if expected > 0.0 {
                (observed as f64 - expected) / expected.sqrt()
            } else if observed > 0 {
                f64::INFINITY
            } else {
                0.0
            };
            let counted = expected >= 1.0;
            let flag = counted && z.abs() > 4.0;
            if counted {
                considered += 1;
                max_abs_z = max_abs_z.max(z.abs());
            }
            flagged += flag as usize;
            bins.push(BinZ { lo, hi, observed, expected, z, flagged: flag });
        }
        HistogramReport { bins, considered, flagged, max_abs_z }
    }
}

/// 1D histogram against `n · ∫_bin density`, with `density` a probability
/// density integrated by adaptive quadrature on each bin.
pub fn histogram_density_distance<F: Fn(f64) -> f64>(samples: &[f64], density: F, edges: &[f64]) -> HistogramReport {
    let n = samples.len() as f64;
    histogram_1d(samples, edges, |a, b| n * crate::quad::quad(&density, a, b, 1e-13, 1e-10))
}

/// 1D histogram with expected counts supplied per bin.
pub fn histogram_1d<E: Fn(f64, f64) -> f64>(samples: &[f64], edges: &[f64], expected: E) -> HistogramReport {
    let nb = edges.len().saturating_sub(1);
    let mut counts = vec![0usize; nb];
    for &s in samples {
        if let Some(i) = bin_of(edges, s) {
            counts[i] += 1;
        }
    }
    let cells =
        (0..nb).map(|i| (vec![edges[i]], vec![edges[i + 1]], counts[i], expected(edges[i], edges[i + 1]))).collect();
    HistogramReport::from_cells(cells)
}

/// 2D histogram with expected counts supplied per cell
/// `(x0, x1, y0, y1)`.
pub fn histogram_2d<E: Fn(f64, f64, f64, f64) -> f64>(
    samples: &[(f64, f64)],
    xedges: &[f64],
    yedges: &[f64],
    expected: E,
) -> HistogramReport {
    let (nx, ny) = (xedges.len().saturating_sub(1), yedges.len().saturating_sub(1));
    let mut counts = vec![0usize; nx * ny];
    for &(x, y) in samples {
        if let (Some(i), Some(j)) = (bin_of(xedges, x), bin_of(yedges, y)) {
            counts[i * ny + j] += 1;
        }
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let e = expected(xedges[i], xedges[i + 1], yedges[j], yedges[j + 1]);
            cells.push((vec![xedges[i], yedges[j]], vec![xedges[i + 1], yedges[j + 1]], counts[i * ny + j], e));
        }
    }
    HistogramReport::from_cells(cells)
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    if edges.len() < 2 || !(v >= edges[0] && v < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

/// `n + 1` evenly spaced edges on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}
