//! Height laws `𝓛` and the functions of them that appear in every closed
//! form: the CDF `F`, the strict CDF `F̃(h) = 𝓛([0, h))`, and the survival
//! primitive `𝔉(h) = -∫_h^∞ (1 - F(u)) du`.
//!
//! All functions accept any real argument. Below the ground the law puts no
//! mass, so `F(h) = 0` and `𝔉(h) = 𝔉(0) + h` for `h < 0`; this extension lets
//! downward lines be handled by the same formulas as upward ones.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to, Tol};

/// Declarative form of a height law, as found in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeightSpec {
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Uniform {
        sup: f64,
    },
    AtomMixture {
        base: Box<HeightSpec>,
        sup: f64,
        atom: f64,
    },
    /// Piecewise-linear CDF through the points `(h[i], cdf[i])`; the CDF is 0
    /// below `h[0]`, so `cdf[0] > 0` places an atom at `h[0]`.
    Tabulated {
        h: Vec<f64>,
        cdf: Vec<f64>,
    },
}

/// An immutable, cheaply clonable height law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HeightSpec", into = "HeightSpec")]
pub struct HeightModel {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    spec: HeightSpec,
    law: Law,
    mean: f64,
    sup: f64,
    atom: f64,
}

#[derive(Debug)]
enum Law {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64, grid: PrimitiveGrid },
    Uniform { sup: f64 },
    AtomMixture { base: HeightModel, sup: f64, atom: f64, base_mass: f64, base_prim_sup: f64 },
    Tabulated { h: Vec<f64>, f: Vec<f64>, right: Vec<f64> },
}

/// Cached values of `𝔉` on a regular grid, summed from the right so that
/// relative accuracy survives far into the tail.
#[derive(Debug)]
struct PrimitiveGrid {
    step: f64,
    values: Vec<f64>,
}

const PRIM_TOL: Tol = Tol { abs: 1e-300, rel: 1e-12, max_intervals: 4000 };

impl TryFrom<HeightSpec> for HeightModel {
    type Error = Error;
    fn try_from(spec: HeightSpec) -> Result<Self> {
        HeightModel::new(spec)
    }
}

impl From<HeightModel> for HeightSpec {
    fn from(m: HeightModel) -> Self {
        m.inner.spec.clone()
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

fn positive(v: f64, name: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite and positive, got {v}")))
    }
}

impl HeightModel {
    pub fn new(spec: HeightSpec) -> Result<Self> {
        let (law, sup, atom) = match &spec {
            HeightSpec::Exponential { rate } => {
                (Law::Exponential { rate: positive(*rate, "rate")? }, f64::INFINITY, 0.0)
            }
            HeightSpec::Weibull { shape, scale } => {
                let (shape, scale) = (positive(*shape, "shape")?, positive(*scale, "scale")?);
                let grid = PrimitiveGrid::weibull(shape, scale);
                (Law::Weibull { shape, scale, grid }, f64::INFINITY, 0.0)
            }
            HeightSpec::Uniform { sup } => {
                let sup = positive(*sup, "sup")?;
                (Law::Uniform { sup }, sup, 0.0)
            }
            HeightSpec::AtomMixture { base, sup, atom } => {
                let sup = positive(*sup, "sup")?;
                if !(0.0..=1.0).contains(atom) {
                    return Err(invalid(format!("atom mass must lie in [0, 1], got {atom}")));
                }
                if matches!(**base, HeightSpec::AtomMixture { .. }) {
                    return Err(invalid("atom_mixture base must not itself be an atom_mixture"));
                }
                let base = HeightModel::new((**base).clone())?;
                let base_mass = base.cdf_strict(sup);
                if base_mass <= 0.0 && *atom < 1.0 {
                    return Err(invalid("base law puts no mass on [0, sup)"));
                }
                let base_prim_sup = base.primitive(sup);
                let law = Law::AtomMixture { base, sup, atom: *atom, base_mass, base_prim_sup };
                (law, sup, *atom)
            }
            HeightSpec::Tabulated { h, cdf } => tabulated(h, cdf)?,
        };
        let mut inner = Inner { spec, law, mean: f64::NAN, sup, atom };
        inner.mean = -inner.primitive(0.0);
        if !inner.mean.is_finite() {
            return Err(Error::NonIntegrableTail);
        }
        Ok(HeightModel { inner: Arc::new(inner) })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(HeightSpec::Exponential { rate })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::new(HeightSpec::Weibull { shape, scale })
    }

    pub fn uniform(sup: f64) -> Result<Self> {
        Self::new(HeightSpec::Uniform { sup })
    }

    pub fn atom_mixture(base: HeightSpec, sup: f64, atom: f64) -> Result<Self> {
        Self::new(HeightSpec::AtomMixture { base: Box::new(base), sup, atom })
    }

    pub fn tabulated(h: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        Self::new(HeightSpec::Tabulated { h, cdf })
    }

    pub fn spec(&self) -> &HeightSpec {
        &self.inner.spec
    }

    /// First moment of the law.
    pub fn mean(&self) -> f64 {
        self.inner.mean
    }

    /// Supremum `S` of the support (possibly `+∞`).
    pub fn sup_support(&self) -> f64 {
        self.inner.sup
    }

    /// Mass `𝓛({S})`.
    pub fn atom_at_sup(&self) -> f64 {
        self.inner.atom
    }

    /// True when the law has an atom at the top of its support.
    pub fn is_max_height_case(&self) -> bool {
        self.inner.atom > 0.0
    }

    /// `F(h) = 𝓛([0, h])`.
    pub fn cdf(&self, h: f64) -> f64 {
        1.0 - self.inner.tail(h)
    }

    /// `F̃(h) = 𝓛([0, h))`.
    pub fn cdf_strict(&self, h: f64) -> f64 {
        1.0 - self.inner.tail_incl(h)
    }

    /// `1 - F(h) = 𝓛((h, ∞))`, computed without cancellation.
    pub fn tail(&self, h: f64) -> f64 {
        self.inner.tail(h)
    }

    /// `1 - F̃(h) = 𝓛([h, ∞))`.
    pub fn tail_incl(&self, h: f64) -> f64 {
        self.inner.tail_incl(h)
    }

    /// Mass of the atom at `h` (zero for continuity points).
    pub fn atom_mass(&self, h: f64) -> f64 {
        self.inner.tail_incl(h) - self.inner.tail(h)
    }

    /// The survival primitive `𝔉(h)`.
    pub fn primitive(&self, h: f64) -> f64 {
        self.inner.primitive(h)
    }

    /// `∫_0^len (1 - F(y0 + slope·u)) du`, the expected number of buildings
    /// (per unit intensity) above the line starting at height `y0`.
    /// `len` may be `+∞`.
    pub fn line_mass(&self, y0: f64, slope: f64, len: f64) -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        if len.is_infinite() {
            return if slope > 0.0 {
                -self.primitive(y0) / slope
            } else if self.tail(y0) == 0.0 && slope == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        if slope.is_infinite() {
            // The line leaves every building behind immediately.
            return if slope > 0.0 { 0.0 } else { len };
        }
        let rise = slope * len;
        if rise.abs() < 1e-3 * self.inner.mean {
            let (a, m, b) = (self.tail(y0), self.tail(y0 + 0.5 * rise), self.tail(y0 + rise));
            return len * (a + 4.0 * m + b) / 6.0;
        }
        ((self.primitive(y0 + rise) - self.primitive(y0)) / slope).max(0.0)
    }

    /// Smallest `h` with `F(h) ≥ p`, for `p ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.inner.quantile(p)
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.below_sup(self.inner.quantile(rng.random::<f64>()))
    }

    /// One draw from the law conditioned on `h ≥ floor`. The floor must lie
    /// below the top of the support (`tail_incl(floor) > 0`).
    pub fn sample_at_least<R: Rng + ?Sized>(&self, floor: f64, rng: &mut R) -> f64 {
        self.below_sup(self.inner.sample_at_least(floor, rng))
    }

    /// Rounding can land a draw on the supremum of an atomless law, which
    /// has probability zero; move it back inside the support.
    fn below_sup(&self, h: f64) -> f64 {
        let s = self.sup_support();
        if h >= s && !self.is_max_height_case() {
            s.next_down()
        } else {
            h
        }
    }
}

fn tabulated(h: &[f64], f: &[f64]) -> Result<(Law, f64, f64)> {
    if h.len() < 2 || h.len() != f.len() {
        return Err(invalid("tabulated law needs at least two points and matching lengths"));
    }
    if h[0] < 0.0 || h.iter().chain(f).any(|v| !v.is_finite()) {
        return Err(invalid("tabulated heights must be finite and nonnegative"));
    }
    if h.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("tabulated heights must be strictly increasing"));
    }
    if f.windows(2).any(|w| w[1] < w[0]) || f[0] < 0.0 {
        return Err(invalid("tabulated CDF must be nondecreasing and nonnegative"));
    }
    if (f[f.len() - 1] - 1.0).abs() > 1e-12 {
        return Err(invalid("tabulated CDF must end at 1"));
    }
    let mut f = f.to_vec();
    let last = f.len() - 1;
    f[last] = 1.0;
    // right[i] = ∫_{h[i]}^∞ (1 - F) du.
    let mut right = vec![0.0; h.len()];
    for i in (0..last).rev() {
        right[i] = right[i + 1] + (h[i + 1] - h[i]) * (1.0 - 0.5 * (f[i] + f[i + 1]));
    }
    let sup = h[f.iter().position(|&v| v >= 1.0).expect("last value is 1")];
    Ok((Law::Tabulated { h: h.to_vec(), f, right }, sup, 0.0))
}

impl PrimitiveGrid {
    fn weibull(shape: f64, scale: f64) -> Self {
        const SEGMENTS: usize = 1024;
        let tail = |u: f64| if u <= 0.0 { 1.0 } else { (-(u / scale).powf(shape)).exp() };
        let top = scale * 40f64.powf(1.0 / shape);
        let step = top / SEGMENTS as f64;
        let mut values = vec![0.0; SEGMENTS + 1];
        values[SEGMENTS] = -integrate_to(tail, top, f64::INFINITY, PRIM_TOL).value;
        for j in (0..SEGMENTS).rev() {
            let seg = integrate(tail, j as f64 * step, (j + 1) as f64 * step, PRIM_TOL).value;
            values[j] = values[j + 1] - seg;
        }
        PrimitiveGrid { step, values }
    }

    fn eval(&self, h: f64, tail: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len() - 1;
        let top = n as f64 * self.step;
        if h >= top {
            return -integrate_to(tail, h, f64::INFINITY, PRIM_TOL).value;
        }
        let j = ((h / self.step).floor() as usize + 1).min(n);
        let node = j as f64 * self.step;
        self.values[j] - integrate(tail, h, node, PRIM_TOL).value
    }
}

impl Inner {
    fn tail(&self, h: f64) -> f64 {
        if h < 0.0 {
            return 1.0;
        }
        match &self.law {
            Law::Exponential { rate } => (-rate * h).exp(),
            Law::Weibull { shape, scale, .. } => (-(h / scale).powf(*shape)).exp(),
            Law::Uniform { sup } => ((sup - h) / sup).clamp(0.0, 1.0),
            Law::AtomMixture { base, sup, atom, base_mass, .. } => {
                if h >= *sup {
                    0.0
                } else {
                    atom + (1.0 - atom) * (base_mass - base.cdf(h)).max(0.0) / base_mass
                }
            }
            Law::Tabulated { h: hs, f, .. } => 1.0 - tab_cdf(hs, f, h),
        }
    }

    fn tail_incl(&self, h: f64) -> f64 {
        if h < 0.0 {
            return 1.0;
        }
        match &self.law {
            Law::AtomMixture { sup, atom, .. } if h == *sup => *atom,
            Law::AtomMixture { sup, .. } if h > *sup => 0.0,
            Law::AtomMixture { base, atom, base_mass, .. } => {
                atom + (1.0 - atom) * (base_mass - base.cdf_strict(h)).max(0.0) / base_mass
            }
            Law::Tabulated { h: hs, f, .. } => {
                if h <= hs[0] {
                    1.0
                } else {
                    1.0 - tab_cdf(hs, f, h)
                }
            }
            _ => self.tail(h),
        }
    }

    fn primitive(&self, h: f64) -> f64 {
        if h < 0.0 {
            return self.primitive(0.0) + h;
        }
        match &self.law {
            Law::Exponential { rate } => -(-rate * h).exp() / rate,
            Law::Weibull { grid, .. } => grid.eval(h, |u| self.tail(u)),
            Law::Uniform { sup } => {
                let r = (sup - h).max(0.0);
                -r * r / (2.0 * sup)
            }
            Law::AtomMixture { base, sup, atom, base_mass, base_prim_sup } => {
                if h >= *sup {
                    return 0.0;
                }
                let len = sup - h;
                // ∫_h^S (F_b(S) - F_b(u)) du = 𝔉_b(S) - 𝔉_b(h) - (S - h)(1 - F_b(S)).
                let inner = (base_prim_sup - base.primitive(h) - len * (1.0 - base_mass)).max(0.0);
                let mass = if *base_mass > 0.0 { (1.0 - atom) * inner / base_mass } else { 0.0 };
                -(atom * len + mass)
            }
            Law::Tabulated { h: hs, f, right } => {
                if h < hs[0] {
                    return -(right[0] + (hs[0] - h));
                }
                let last = hs.len() - 1;
                if h >= hs[last] {
                    return 0.0;
                }
                let i = hs.partition_point(|&v| v <= h) - 1;
                let fh = tab_cdf(hs, f, h);
                -(right[i + 1] + (hs[i + 1] - h) * (1.0 - 0.5 * (fh + f[i + 1])))
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match &self.law {
            Law::Exponential { rate } => -(-p).ln_1p() / rate,
            Law::Weibull { shape, scale, .. } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Law::Uniform { sup } => p * sup,
            Law::AtomMixture { base, sup, atom, base_mass, .. } => {
                let cut = 1.0 - atom;
                if p >= cut {
                    *sup
                } else {
                    base.quantile(p / cut * base_mass).min(*sup)
                }
            }
            Law::Tabulated { h, f, .. } => {
                if p <= f[0] {
                    return h[0];
                }
                let i = f.partition_point(|&v| v < p);
                let (h0, h1, f0, f1) = (h[i - 1], h[i], f[i - 1], f[i]);
                if f1 <= f0 {
                    h1
                } else {
                    h0 + (h1 - h0) * (p - f0) / (f1 - f0)
                }
            }
        }
    }

    fn sample_at_least<R: Rng + ?Sized>(&self, floor: f64, rng: &mut R) -> f64 {
        if floor <= 0.0 {
            return self.quantile(rng.random::<f64>());
        }
        let u: f64 = rng.random();
        match &self.law {
            // Memoryless: the overshoot is again exponential.
            Law::Exponential { rate } => floor - (-u).ln_1p() / rate,
            Law::Weibull { shape, scale, .. } => {
                let e = -(-u).ln_1p();
                scale * ((floor / scale).powf(*shape) + e).powf(1.0 / shape)
            }
            Law::Uniform { sup } => floor + u * (sup - floor).max(0.0),
            Law::AtomMixture { base, sup, atom, base_mass, .. } => {
                if floor >= *sup {
                    return *sup;
                }
                let total = self.tail_incl(floor);
                if u * total < *atom {
                    *sup
                } else {
                    let lo = base.cdf_strict(floor);
                    let v = (u * total - atom) / (total - atom);
                    base.quantile(lo + v * (base_mass - lo)).clamp(floor, *sup)
                }
            }
            Law::Tabulated { .. } => {
                let lo = 1.0 - self.tail_incl(floor);
                self.quantile(lo + u * (1.0 - lo)).max(floor)
            }
        }
    }
}

fn tab_cdf(h: &[f64], f: &[f64], x: f64) -> f64 {
    if x < h[0] {
        return 0.0;
    }
    let last = h.len() - 1;
    if x >= h[last] {
        return 1.0;
    }
    let i = h.partition_point(|&v| v <= x) - 1;
    f[i] + (f[i + 1] - f[i]) * (x - h[i]) / (h[i + 1] - h[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::quad;
    use rand::SeedableRng;

    fn models() -> Vec<HeightModel> {
        vec![
            HeightModel::exponential(1.0).unwrap(),
            HeightModel::exponential(2.5).unwrap(),
            HeightModel::weibull(2.0, 1.0).unwrap(),
            HeightModel::weibull(0.7, 1.3).unwrap(),
            HeightModel::uniform(3.0).unwrap(),
            HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap(),
            HeightModel::atom_mixture(HeightSpec::Exponential { rate: 1.0 }, 2.0, 0.1).unwrap(),
            HeightModel::tabulated(vec![0.5, 1.0, 4.0], vec![0.1, 0.3, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn spec_examples() {
        let e = HeightModel::exponential(1.0).unwrap();
        assert_eq!(e.cdf(0.0), 0.0);
        assert!((e.cdf(1e9) - 1.0).abs() < 1e-12);
        assert!((e.primitive(0.0) + 1.0).abs() < 1e-15);
        assert!((e.primitive(2.0) + (-2f64).exp()).abs() < 1e-15);
        assert!((e.cdf_strict(2.0) - (1.0 - (-2f64).exp())).abs() < 1e-15);
        let w = HeightModel::weibull(2.0, 1.0).unwrap();
        assert!((w.cdf(1.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        let a = HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap();
        assert!((a.cdf_strict(1.0) - 0.8).abs() < 1e-15);
        assert!((a.cdf_strict(0.5) - 0.4).abs() < 1e-15);
        assert_eq!(a.cdf(1.0), 1.0);
        assert!(a.is_max_height_case());
        assert_eq!(a.atom_at_sup(), 0.2);
    }

    #[test]
    fn primitive_matches_quadrature_of_tail() {
        for m in models() {
            for &h in &[0.0, 0.3, 0.9, 1.7, 2.5, 3.5] {
                let want = -quad(|u| m.tail(u), h, f64::INFINITY, 1e-14, 1e-12);
                let got = m.primitive(h);
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-12), "{:?} h={h}: {got} vs {want}", m.spec());
            }
        }
    }

    #[test]
    fn mean_equals_minus_primitive_at_zero() {
        let e = HeightModel::exponential(2.0).unwrap();
        assert!((e.mean() - 0.5).abs() < 1e-15);
        let u = HeightModel::uniform(3.0).unwrap();
        assert!((u.mean() - 1.5).abs() < 1e-15);
        let a = HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap();
        assert!((a.mean() - (0.8 * 0.5 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for m in models() {
            for i in 1..50 {
                let p = i as f64 / 50.0;
                let q = m.quantile(p);
                assert!(m.cdf(q) >= p - 1e-12, "{:?} p={p}", m.spec());
                assert!(m.cdf_strict(q) <= p + 1e-12, "{:?} p={p}", m.spec());
            }
        }
    }

    #[test]
    fn conditional_sampling_respects_floor() {
        let mut rng = crate::Stream::seed_from_u64(3);
        for m in models() {
            let floor = m.quantile(0.6);
            let n = 20_000;
            let mut above = 0;
            for _ in 0..n {
                let h = m.sample_at_least(floor, &mut rng);
                assert!(h >= floor);
                if h > m.quantile(0.8) {
                    above += 1;
                }
            }
            // P(h > q(0.8) | h ≥ q(0.6)) = tail(q0.8) / tail_incl(q0.6).
            let p = m.tail(m.quantile(0.8)) / m.tail_incl(floor);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = above as f64 / n as f64;
            assert!((freq - p).abs() < 5.0 * se + 1e-3, "{:?}: {freq} vs {p}", m.spec());
        }
    }

    #[test]
    fn deep_tail_primitive_keeps_relative_accuracy() {
        let w = HeightModel::weibull(2.0, 1.0).unwrap();
        let h = 8.0;
        let want = -quad(|u| (-u * u).exp(), h, f64::INFINITY, 1e-300, 1e-13);
        assert!((w.primitive(h) / want - 1.0).abs() < 1e-9);
        let e = HeightModel::exponential(1.0).unwrap();
        assert!((e.line_mass(60.0, 1e-20, 1e3) / (1e3 * (-60f64).exp()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn line_mass_matches_quadrature() {
        for m in models() {
            for &(y, t, len) in &[(0.0, 1.0, 2.0), (1.0, -0.3, 4.0), (0.5, 0.0, 3.0), (0.2, 1e-7, 5.0)] {
                let want = quad(|u| m.tail(y + t * u), 0.0, len, 1e-14, 1e-11);
                let got = m.line_mass(y, t, len);
                assert!((got - want).abs() < 1e-9 * want.max(1.0), "{:?} {y} {t} {len}: {got} vs {want}", m.spec());
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HeightModel::exponential(0.0).is_err());
        assert!(HeightModel::uniform(-1.0).is_err());
        assert!(HeightModel::tabulated(vec![0.0, 1.0], vec![0.0, 0.9]).is_err());
        assert!(HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 1.5).is_err());
        let json = r#"{"kind":"exponential","rate":1.0,"extra":1}"#;
        assert!(serde_json::from_str::<HeightModel>(json).is_err());
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"kind":"atom_mixture","base":{"kind":"uniform","sup":1.0},"sup":1.0,"atom":0.2}"#;
        let m: HeightModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.atom_at_sup(), 0.2);
        let back = serde_json::to_string(&m).unwrap();
        let m2: HeightModel = serde_json::from_str(&back).unwrap();
        assert_eq!(m.spec(), m2.spec());
    }
}
