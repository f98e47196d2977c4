//! Poisson building processes on windows of the line.
//!
//! A [`Landscape`] holds every building of a covered interval `[a, b]` and can
//! grow that interval on demand in both directions. Extensions are drawn from
//! the landscape's own random stream, independently of what was already
//! generated, which is exactly the spatial Markov property of the process.
//!
//! A landscape may carry a height *floor*: regions generated on the right after
//! the floor was raised contain only the buildings of height at least the floor (an
//! exact thinning of the process). Blockage chains never look below their
//! current height, so this keeps long trajectories cheap without changing
//! their law.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::quad::{integrate, Tol};
use crate::{Point, Stream};

/// A building: base abscissa `x` and height `h ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x: f64,
    pub h: f64,
}

impl Building {
    pub const fn new(x: f64, h: f64) -> Self {
        Building { x, h }
    }

    pub fn top(self) -> Point {
        Point::new(self.x, self.h)
    }
}

/// Intensity of the bases: a constant, or piecewise constant with `rates[0]`
/// on `(-∞, breaks[0])`, `rates[i]` on `[breaks[i-1], breaks[i])` and the last
/// rate on `[breaks[last], ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntensityProfile {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, rates: Vec<f64> },
}

impl IntensityProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("intensity profile: {m}")));
        match self {
            IntensityProfile::Constant(l) if !(l.is_finite() && *l > 0.0) => bad("λ must be positive"),
            IntensityProfile::Constant(_) => Ok(()),
            IntensityProfile::Piecewise { breaks, rates } => {
                if rates.len() != breaks.len() + 1 {
                    return bad("need one more rate than breaks");
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().any(|b| !b.is_finite()) {
                    return bad("breaks must be finite and strictly increasing");
                }
                if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return bad("rates must be finite and nonnegative");
                }
                if rates.iter().all(|&r| r == 0.0) {
                    return bad("at least one rate must be positive");
                }
                Ok(())
            }
        }
    }

    /// `Some(λ)` for a constant profile.
    pub fn constant(&self) -> Option<f64> {
        match self {
            IntensityProfile::Constant(l) => Some(*l),
            IntensityProfile::Piecewise { .. } => None,
        }
    }

    pub fn rate(&self, x: f64) -> f64 {
        match self {
            IntensityProfile::Constant(l) => *l,
            IntensityProfile::Piecewise { breaks, rates } => rates[breaks.partition_point(|&b| b <= x)],
        }
    }

    /// Largest rate; sets the scale of lookahead chunks.
    pub fn max_rate(&self) -> f64 {
        match self {
            IntensityProfile::Constant(l) => *l,
            IntensityProfile::Piecewise { rates, .. } => rates.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Smallest rate on `[a, b]`.
    pub fn min_rate_on(&self, a: f64, b: f64) -> f64 {
        self.pieces(a, b).iter().map(|p| p.2).fold(f64::INFINITY, f64::min)
    }

    /// Splits `[a, b]` (with `b` possibly infinite) into constant pieces.
    pub fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        match self {
            IntensityProfile::Constant(l) => vec![(a, b, *l)],
            IntensityProfile::Piecewise { breaks, rates } => {
                let mut out = Vec::new();
                let mut lo = a;
                let mut i = breaks.partition_point(|&v| v <= a);
                while lo < b {
                    let hi = if i < breaks.len() { breaks[i].min(b) } else { b };
                    out.push((lo, hi, rates[i]));
                    lo = hi;
                    i += 1;
                }
                out
            }
        }
    }

    /// `∫_a^b λ(x) dx`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.pieces(a, b).iter().map(|(lo, hi, r)| if *r == 0.0 { 0.0 } else { r * (hi - lo) }).sum()
    }
}

/// A window of a Poisson building process.
#[derive(Debug, Clone)]
pub struct Landscape {
    buildings: Vec<Building>,
    a: f64,
    b: f64,
    profile: IntensityProfile,
    heights: HeightModel,
    floor: f64,
    stream: Option<Stream>,
}

/// Samples the process on `[a, b]`. The returned landscape keeps a child
/// stream drawn from `rng` for later extensions.
pub fn generate_window<R: Rng>(
    profile: &IntensityProfile,
    heights: &HeightModel,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Landscape {
    Landscape::generate(profile, heights, a, b, Stream::from_rng(rng))
}

impl Landscape {
    /// Samples `[a, b]` using (and keeping) `stream`.
    pub fn generate(profile: &IntensityProfile, heights: &HeightModel, a: f64, b: f64, stream: Stream) -> Self {
        let mut l = Landscape {
            buildings: Vec::new(),
            a,
            b: a,
            profile: profile.clone(),
            heights: heights.clone(),
            floor: 0.0,
            stream: Some(stream),
        };
        if b > a {
            l.buildings = l.sample(a, b, 0.0);
            l.b = b;
        }
        l
    }

    /// A landscape that has seen nothing yet: covered interval `[x, x]`.
    pub fn lazy(profile: &IntensityProfile, heights: &HeightModel, x: f64, stream: Stream) -> Self {
        Self::generate(profile, heights, x, x, stream)
    }

    /// A fixed landscape (no stream, so it cannot be extended).
    pub fn from_buildings(
        mut buildings: Vec<Building>,
        covered: (f64, f64),
        profile: &IntensityProfile,
        heights: &HeightModel,
    ) -> Result<Self> {
        buildings.sort_by(|p, q| p.x.total_cmp(&q.x));
        for w in buildings.windows(2) {
            if w[0].x == w[1].x {
                return Err(Error::DuplicateBase(w[0].x));
            }
        }
        for bd in &buildings {
            if !(bd.x >= covered.0 && bd.x <= covered.1) {
                return Err(Error::OutsideCovered { x: bd.x, a: covered.0, b: covered.1 });
            }
            if !(bd.h >= 0.0) {
                return Err(Error::Config(format!("negative building height {}", bd.h)));
            }
        }
        Ok(Landscape {
            buildings,
            a: covered.0,
            b: covered.1,
            profile: profile.clone(),
            heights: heights.clone(),
            floor: 0.0,
            stream: None,
        })
    }

    /// Attaches a stream so a fixed landscape can be extended.
    pub fn with_stream(mut self, stream: Stream) -> Self {
        self.stream = Some(stream);
        self
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn covered(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn profile(&self) -> &IntensityProfile {
        &self.profile
    }

    pub fn heights(&self) -> &HeightModel {
        &self.heights
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_extendable(&self) -> bool {
        self.stream.is_some()
    }

    /// Raises the height floor for regions generated to the right from now
    /// on; extensions to the left always sample the full process. Lowering is
    /// ignored: the covered region would no longer be complete.
    pub fn raise_floor(&mut self, floor: f64) {
        if floor > self.floor {
            self.floor = floor;
        }
    }

    /// Intensity of generated buildings relative to the full process.
    pub fn floor_fraction(&self) -> f64 {
        self.heights.tail_incl(self.floor)
    }

    /// Index of the first building strictly right of `x`.
    pub fn first_after(&self, x: f64) -> usize {
        self.buildings.partition_point(|b| b.x <= x)
    }

    /// Index of the first building with base `≥ x`.
    pub fn first_at_or_after(&self, x: f64) -> usize {
        self.buildings.partition_point(|b| b.x < x)
    }

    /// Position of the building with base exactly `x`.
    pub fn find(&self, x: f64) -> Option<usize> {
        let i = self.first_at_or_after(x);
        (i < self.buildings.len() && self.buildings[i].x == x).then_some(i)
    }

    fn sample(&mut self, lo: f64, hi: f64, floor: f64) -> Vec<Building> {
        let frac = self.heights.tail_incl(floor);
        let pieces = self.profile.pieces(lo, hi);
        let heights = self.heights.clone();
        let rng = self.stream.as_mut().expect("caller checked the stream");
        let mut out = Vec::new();
        for (p, q, rate) in pieces {
            let mean = rate * frac * (q - p);
            if !(mean > 0.0) {
                continue;
            }
            let n = Poisson::new(mean).expect("finite positive mean").sample(rng) as usize;
            let start = out.len();
            for _ in 0..n {
                out.push(Building { x: p + (q - p) * rng.random::<f64>(), h: 0.0 });
            }
            out[start..].sort_by(|u, v| u.x.total_cmp(&v.x));
            for bd in &mut out[start..] {
                bd.h = heights.sample_at_least(floor, rng);
            }
        }
        out
    }

    /// Grows the covered interval to `[a, b + delta]`.
    pub fn extend_right(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Ok(());
        }
        if self.stream.is_none() {
            return Err(Error::NotExtendable);
        }
        let hi = self.b + delta;
        let new = self.sample(self.b, hi, self.floor);
        self.buildings.extend(new);
        self.b = hi;
        Ok(())
    }

    /// Grows the covered interval to `[a - delta, b]`.
    pub fn extend_left(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Ok(());
        }
        if self.stream.is_none() {
            return Err(Error::NotExtendable);
        }
        let lo = self.a - delta;
        let new = self.sample(lo, self.a, 0.0);
        self.buildings.splice(0..0, new);
        self.a = lo;
        Ok(())
    }

    pub fn extend_right_to(&mut self, x: f64) -> Result<()> {
        self.extend_right(x - self.b)
    }

    pub fn extend_left_to(&mut self, x: f64) -> Result<()> {
        self.extend_left(self.a - x)
    }

    /// Forgets everything left of `x` (used by forward-only walks).
    pub fn discard_left_of(&mut self, x: f64) {
        if x <= self.a {
            return;
        }
        let i = self.first_at_or_after(x);
        self.buildings.drain(..i);
        self.a = x.min(self.b);
    }

    /// Inserts a deterministic building, as for Palm rooting.
    pub fn palm_add(&mut self, building: Building) -> Result<()> {
        if !(building.x >= self.a && building.x <= self.b) {
            return Err(Error::OutsideCovered { x: building.x, a: self.a, b: self.b });
        }
        if !(building.h >= 0.0) {
            return Err(Error::Config(format!("negative building height {}", building.h)));
        }
        let i = self.first_at_or_after(building.x);
        if i < self.buildings.len() && self.buildings[i].x == building.x {
            return Err(Error::DuplicateBase(building.x));
        }
        self.buildings.insert(i, building);
        Ok(())
    }

    /// Writes the buildings as CSV `x,h`, preceded by `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        write_buildings_csv(&mut w, &self.buildings, comments)
    }
}

pub fn write_buildings_csv<W: Write>(w: &mut W, buildings: &[Building], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "h"])?;
    for b in buildings {
        out.write_record([b.x.to_string(), b.h.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads CSV `x,h` (comment lines starting with `#` are skipped).
pub fn read_buildings_csv<R: Read>(r: R) -> Result<Vec<Building>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "h" {
        return Err(Error::Config(format!("expected header x,h, got {:?}", headers)));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let b: Building = rec?;
        out.push(b);
    }
    Ok(out)
}

fn check_line(anchor: Point, slope: f64, a: f64, b: f64) -> Result<()> {
    for x in [a, b] {
        if x.is_finite() {
            let y = anchor.y + slope * (x - anchor.x);
            if y < -1e-12 * (1.0 + anchor.y.abs()) {
                return Err(Error::NegativeLine(y, x));
            }
        } else if slope < 0.0 {
            return Err(Error::NegativeLine(f64::NEG_INFINITY, x));
        }
    }
    Ok(())
}

/// Probability that every building with base in `[a, b]` lies on or below the
/// line through `anchor` with the given slope. `b` may be `+∞`.
pub fn below_line_probability(
    profile: &IntensityProfile,
    heights: &HeightModel,
    a: f64,
    b: f64,
    anchor: Point,
    slope: f64,
) -> Result<f64> {
    check_line(anchor, slope, a, b)?;
    Ok((-line_exceedance_mass(profile, heights, a, b, anchor, slope)).exp())
}

/// Expected number of buildings with base in `[a, b]` strictly above the line.
pub fn line_exceedance_mass(
    profile: &IntensityProfile,
    heights: &HeightModel,
    a: f64,
    b: f64,
    anchor: Point,
    slope: f64,
) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    profile
        .pieces(a, b)
        .into_iter()
        .filter(|p| p.2 > 0.0)
        .map(|(lo, hi, rate)| rate * heights.line_mass(anchor.y + slope * (lo - anchor.x), slope, hi - lo))
        .sum()
}

/// Probability that every building with base in `[a, b]` lies on or below
/// the curve `f` (`f` may return `+∞`).
pub fn below_curve_probability<F: Fn(f64) -> f64>(
    profile: &IntensityProfile,
    heights: &HeightModel,
    a: f64,
    b: f64,
    f: F,
) -> Result<f64> {
    let mut negative = None;
    let mut mass = 0.0;
    for (lo, hi, rate) in profile.pieces(a, b) {
        if rate == 0.0 {
            continue;
        }
        let q = integrate(
            |x| {
                let y = f(x);
                if y < 0.0 && negative.is_none() {
                    negative = Some((y, x));
                }
                heights.tail(y)
            },
            lo,
            hi,
            Tol::new(1e-12, 1e-10),
        );
        mass += rate * q.value;
    }
    if let Some((y, x)) = negative {
        return Err(Error::NegativeLine(y, x));
    }
    Ok((-mass).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::HeightSpec;
    use crate::validation::stats::{ks_distance, Ecdf};
    use proptest::prelude::*;

    fn exp1() -> HeightModel {
        HeightModel::exponential(1.0).unwrap()
    }

    fn poisson_cdf(mean: f64) -> impl Fn(f64) -> f64 {
        move |k: f64| {
            if k < 0.0 {
                return 0.0;
            }
            let mut term = (-mean).exp();
            let mut acc = term;
            for i in 1..=(k.floor() as usize) {
                term *= mean / i as f64;
                acc += term;
            }
            acc.min(1.0)
        }
    }

    #[test]
    fn poisson_counts() {
        let p = IntensityProfile::Constant(2.0);
        let mut rng = Stream::seed_from_u64(11);
        let n = 10_000;
        let counts: Vec<f64> = (0..n).map(|_| generate_window(&p, &exp1(), 0.0, 10.0, &mut rng).len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        assert!((mean - 20.0).abs() < 4.0 * (20.0 / n as f64).sqrt(), "{mean}");
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 20.0 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn null_window_is_empty() {
        let mut rng = Stream::seed_from_u64(1);
        let l = generate_window(&IntensityProfile::Constant(1.0), &exp1(), 0.0, 0.0, &mut rng);
        assert!(l.is_empty());
        assert_eq!(l.covered(), (0.0, 0.0));
    }

    #[test]
    fn heights_follow_the_law() {
        let mut rng = Stream::seed_from_u64(5);
        let p = IntensityProfile::Constant(1.0);
        let m = exp1();
        let mut pooled = Vec::new();
        for i in 0..100 {
            let l = generate_window(&p, &m, 0.0, 100.0, &mut rng);
            let hs: Vec<f64> = l.buildings().iter().map(|b| b.h).collect();
            if i == 0 {
                // A single window holds ~100 heights; use the α = 0.01 critical value.
                let d = ks_distance(&Ecdf::new(hs.clone()).unwrap(), |h| m.cdf(h));
                assert!(d < 1.63 / (hs.len() as f64).sqrt(), "{d}");
            }
            pooled.extend(hs);
        }
        let d = ks_distance(&Ecdf::new(pooled).unwrap(), |h| m.cdf(h));
        assert!(d < 0.05, "{d}");
    }

    #[test]
    fn split_extension_matches_single() {
        let p = IntensityProfile::Constant(1.0);
        let mut rng = Stream::seed_from_u64(9);
        let n = 10_000;
        let mut two = Vec::with_capacity(n);
        let mut one = Vec::with_capacity(n);
        for _ in 0..n {
            let mut l = generate_window(&p, &exp1(), 0.0, 0.0, &mut rng);
            l.extend_right(5.0).unwrap();
            l.extend_right(5.0).unwrap();
            two.push(l.len() as f64);
            let mut l = generate_window(&p, &exp1(), 0.0, 0.0, &mut rng);
            l.extend_right(10.0).unwrap();
            one.push(l.len() as f64);
        }
        let cdf = poisson_cdf(10.0);
        assert!(ks_distance(&Ecdf::new(two).unwrap(), &cdf) < 0.02);
        assert!(ks_distance(&Ecdf::new(one).unwrap(), &cdf) < 0.02);
    }

    #[test]
    fn extension_count_is_poisson() {
        let p = IntensityProfile::Constant(3.0);
        let mut rng = Stream::seed_from_u64(2);
        let n = 20_000;
        let mut hist = [0usize; 12];
        for _ in 0..n {
            let mut l = generate_window(&p, &exp1(), 0.0, 2.0, &mut rng);
            let before = l.len();
            l.extend_right(1.0).unwrap();
            hist[(l.len() - before).min(11)] += 1;
        }
        let mut pk = (-3f64).exp();
        for (k, &obs) in hist.iter().enumerate().take(10) {
            let exp = pk * n as f64;
            assert!(((obs as f64 - exp) / exp.sqrt()).abs() < 4.0, "k={k}");
            pk *= 3.0 / (k + 1) as f64;
        }
    }

    #[test]
    fn superposition() {
        let m = exp1();
        let mut rng = Stream::seed_from_u64(4);
        let n = 10_000;
        let joint: Vec<f64> = (0..n)
            .map(|_| generate_window(&IntensityProfile::Constant(3.0), &m, 0.0, 2.0, &mut rng).len() as f64)
            .collect();
        let union: Vec<f64> = (0..n)
            .map(|_| {
                let a = generate_window(&IntensityProfile::Constant(1.0), &m, 0.0, 2.0, &mut rng).len();
                let b = generate_window(&IntensityProfile::Constant(2.0), &m, 0.0, 2.0, &mut rng).len();
                (a + b) as f64
            })
            .collect();
        let cdf = poisson_cdf(6.0);
        assert!(ks_distance(&Ecdf::new(joint).unwrap(), &cdf) < 0.02);
        assert!(ks_distance(&Ecdf::new(union).unwrap(), &cdf) < 0.02);
    }

    #[test]
    fn floor_thinning_keeps_the_upper_process() {
        // Buildings of height ≥ 1 in a floored window form a PPP of intensity λ·e^{-1}.
        let p = IntensityProfile::Constant(2.0);
        let mut rng = Stream::seed_from_u64(21);
        let n = 20_000;
        let mut total = 0usize;
        for _ in 0..n {
            let mut l = Landscape::lazy(&p, &exp1(), 0.0, Stream::from_rng(&mut rng));
            l.raise_floor(1.0);
            l.extend_right(5.0).unwrap();
            assert!(l.buildings().iter().all(|b| b.h >= 1.0));
            total += l.len();
        }
        let mean = total as f64 / n as f64;
        let want = 10.0 * (-1f64).exp();
        assert!((mean - want).abs() < 4.0 * (want / n as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn below_line_examples() {
        let p = IntensityProfile::Constant(1.0);
        let m = exp1();
        let u = HeightModel::uniform(1.0).unwrap();
        assert_eq!(below_line_probability(&p, &u, 0.0, 5.0, Point::new(0.0, 1.5), 0.0).unwrap(), 1.0);
        let v = below_line_probability(&p, &m, 0.0, 1.0, Point::new(0.0, 0.0), 0.0).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-14);
        let v = below_line_probability(&p, &m, 0.0, 2.0, Point::new(0.0, 1.0), 1.0).unwrap();
        let want = (-((-1f64).exp() - (-3f64).exp())).exp();
        assert!((v - want).abs() < 1e-14);
        assert!((want - 0.727_535_58).abs() < 1e-8);
        assert!(matches!(
            below_line_probability(&p, &m, 0.0, 2.0, Point::new(0.0, 1.0), -1.0),
            Err(Error::NegativeLine(..))
        ));
        let c = below_curve_probability(&p, &m, 0.0, 2.0, |x| 1.0 + x).unwrap();
        assert!((c - want).abs() < 1e-8);
        assert_eq!(below_curve_probability(&p, &m, 0.0, 2.0, |_| f64::INFINITY).unwrap(), 1.0);
    }

    fn mc_below(
        p: &IntensityProfile,
        m: &HeightModel,
        a: f64,
        b: f64,
        f: impl Fn(f64) -> f64,
        seed: u64,
    ) -> (f64, f64) {
        let mut rng = Stream::seed_from_u64(seed);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| generate_window(p, m, a, b, &mut rng).buildings().iter().all(|bd| bd.h <= f(bd.x)))
            .count();
        let q = hits as f64 / n as f64;
        (q, (q * (1.0 - q) / n as f64).sqrt())
    }

    #[test]
    fn below_line_monte_carlo() {
        let p = IntensityProfile::Constant(1.0);
        let m = exp1();
        let want = below_line_probability(&p, &m, 0.0, 1.0, Point::new(0.0, 0.0), 0.0).unwrap();
        let (q, se) = mc_below(&p, &m, 0.0, 1.0, |_| 0.0, 1);
        assert!((q - want).abs() < 3.0 * se, "{q} {want}");
        let want = below_line_probability(&p, &m, 0.0, 2.0, Point::new(0.0, 1.0), 1.0).unwrap();
        let (q, se) = mc_below(&p, &m, 0.0, 2.0, |x| 1.0 + x, 2);
        assert!((q - want).abs() < 3.0 * se, "{q} {want}");
    }

    #[test]
    fn below_disc_profile_monte_carlo() {
        let p = IntensityProfile::Constant(1.0);
        let m = exp1();
        let f = |a: f64| (1.0 - a * a).max(0.0).sqrt();
        let want = below_curve_probability(&p, &m, 0.0, 1.0, f).unwrap();
        assert!(want > 0.0 && want < 1.0);
        let (q, se) = mc_below(&p, &m, 0.0, 1.0, f, 3);
        assert!((q - want).abs() < 3.0 * se, "{q} {want}");
    }

    #[test]
    fn piecewise_profiles() {
        let p = IntensityProfile::Piecewise { breaks: vec![0.0, 1.0], rates: vec![1.0, 0.0, 2.0] };
        p.validate().unwrap();
        assert_eq!(p.rate(-1.0), 1.0);
        assert_eq!(p.rate(0.5), 0.0);
        assert_eq!(p.rate(1.0), 2.0);
        assert!((p.mass(-1.0, 3.0) - 5.0).abs() < 1e-15);
        let m = exp1();
        let v = below_line_probability(&p, &m, -1.0, 3.0, Point::new(-1.0, 0.0), 0.0).unwrap();
        assert!((v - (-5f64).exp()).abs() < 1e-14);
        let mut rng = Stream::seed_from_u64(8);
        for _ in 0..200 {
            let l = generate_window(&p, &m, -2.0, 3.0, &mut rng);
            assert!(l.buildings().iter().all(|b| !(0.0..1.0).contains(&b.x)));
        }
        let json = r#"{"breaks":[0.0],"rates":[1.0,2.0]}"#;
        let q: IntensityProfile = serde_json::from_str(json).unwrap();
        assert_eq!(q.rate(1.0), 2.0);
        let c: IntensityProfile = serde_json::from_str("1.5").unwrap();
        assert_eq!(c.constant(), Some(1.5));
    }

    #[test]
    fn palm_add_rules() {
        let p = IntensityProfile::Constant(1.0);
        let m = HeightModel::new(HeightSpec::Uniform { sup: 4.0 }).unwrap();
        let mut l = Landscape::from_buildings(vec![], (-1.0, 1.0), &p, &m).unwrap();
        l.palm_add(Building::new(0.0, 2.0)).unwrap();
        assert_eq!(l.buildings(), &[Building::new(0.0, 2.0)]);
        assert!(matches!(l.palm_add(Building::new(0.0, 1.0)), Err(Error::DuplicateBase(_))));
        assert!(matches!(l.palm_add(Building::new(5.0, 1.0)), Err(Error::OutsideCovered { .. })));
        assert!(matches!(l.extend_right(1.0), Err(Error::NotExtendable)));
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = Stream::seed_from_u64(6);
        let l = generate_window(&IntensityProfile::Constant(1.0), &exp1(), 0.0, 20.0, &mut rng);
        let mut buf = Vec::new();
        l.write_csv(&mut buf, &["seed 6".into()]).unwrap();
        let back = read_buildings_csv(buf.as_slice()).unwrap();
        assert_eq!(back, l.buildings());
    }

    proptest! {
        #[test]
        fn invariants_after_extensions(seed in 0u64..1000, steps in proptest::collection::vec((any::<bool>(), 0.0f64..5.0), 0..6)) {
            let mut l = Landscape::lazy(&IntensityProfile::Constant(2.0), &exp1(), 0.0, Stream::seed_from_u64(seed));
            for (right, d) in steps {
                if right { l.extend_right(d).unwrap() } else { l.extend_left(d).unwrap() }
                let (a, b) = l.covered();
                prop_assert!(l.buildings().windows(2).all(|w| w[0].x < w[1].x));
                prop_assert!(l.buildings().iter().all(|bd| bd.x >= a && bd.x <= b && bd.h >= 0.0));
            }
        }

        #[test]
        fn below_line_is_monotone(y in 0.0f64..3.0, t in 0.0f64..2.0, len in 0.1f64..5.0, lam in 0.1f64..3.0) {
            let m = exp1();
            let p = IntensityProfile::Constant(lam);
            let base = below_line_probability(&p, &m, 0.0, len, Point::new(0.0, y), t).unwrap();
            let longer = below_line_probability(&p, &m, 0.0, len * 1.5, Point::new(0.0, y), t).unwrap();
            let denser = below_line_probability(&IntensityProfile::Constant(lam * 1.5), &m, 0.0, len, Point::new(0.0, y), t).unwrap();
            let higher = below_line_probability(&p, &m, 0.0, len, Point::new(0.0, y + 0.5), t).unwrap();
            prop_assert!(longer <= base + 1e-15);
            prop_assert!(denser <= base + 1e-15);
            prop_assert!(higher >= base - 1e-15);
        }
    }
}
