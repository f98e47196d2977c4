//! General convex range. A symmetric convex compact range `𝐑` is described by
//! its upper profile `u(a) = sup{b : (a, b) ∈ 𝐑}` on `[-a_max, a_max]`; the
//! lower profile is `-u(-a)`.
//!
//! From a point, buildings taller than the shifted upper profile stop line of
//! sight at every altitude (the stoppage point), and the blocking building is
//! the steepest in-range building strictly before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::landscape::{Building, IntensityProfile, Landscape};
use crate::quad::{integrate, Tol};
use crate::Point;

/// A symmetric convex compact range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RangeSpec {
    /// Euclidean disc.
    Disc { radius: f64 },
    /// Axis-aligned rectangle `[-W, W] × [-H, H]`; `H` may be infinite.
    Rect { half_width: f64, half_height: f64 },
    /// `|a| + |b| ≤ r`.
    Diamond { radius: f64 },
    /// Concave upper profile tabulated at increasing abscissae spanning
    /// `[-a_max, a_max]`, linearly interpolated. A table starting at 0 is
    /// mirrored.
    Profile { a: Vec<f64>, h: Vec<f64> },
}

impl RangeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        match self {
            RangeSpec::Disc { radius } | RangeSpec::Diamond { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("range radius must be positive and finite, got {radius}"));
                }
            }
            RangeSpec::Rect { half_width, half_height } => {
                if !(half_width.is_finite() && *half_width > 0.0 && *half_height > 0.0) {
                    return bad(format!("rectangle needs positive sides, got {half_width} x {half_height}"));
                }
            }
            RangeSpec::Profile { a, h } => {
                if a.len() < 2 || a.len() != h.len() || a.iter().chain(h).any(|v| !v.is_finite()) {
                    return bad("profile needs at least two finite points with matching lengths".into());
                }
                if a.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("profile abscissae must be strictly increasing".into());
                }
                if a[0] != 0.0 && (a[0] + a[a.len() - 1]).abs() > 1e-9 * a[a.len() - 1].abs().max(1.0) {
                    return bad("profile must span a symmetric interval [-a_max, a_max] or start at 0".into());
                }
                for i in 1..a.len() - 1 {
                    let s0 = (h[i] - h[i - 1]) / (a[i] - a[i - 1]);
                    let s1 = (h[i + 1] - h[i]) / (a[i + 1] - a[i]);
                    if s1 > s0 + 1e-9 * (1.0 + s0.abs()) {
                        return bad(format!("profile is not concave at a = {}", a[i]));
                    }
                }
                let amax = a[a.len() - 1];
                if self.upper(0.0) < 0.0
                    || (0..=16).any(|k| {
                        let x = amax * k as f64 / 16.0;
                        self.upper(x) < self.lower(x) - 1e-12
                    })
                {
                    return bad("profile range is empty somewhere (upper below lower)".into());
                }
            }
        }
        Ok(())
    }

    /// Parses `disc:R`, `rect:W,H`, `diamond:R` or `profile:<csv>` (columns
    /// `a,h`). `W` and `H` are half-sides; `H` may be `inf`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| Error::Config(format!("range `{s}` needs kind:args")))?;
        let num =
            |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{v}` in range `{s}`")));
        let r = match kind {
            "disc" => RangeSpec::Disc { radius: num(arg)? },
            "diamond" => RangeSpec::Diamond { radius: num(arg)? },
            "rect" => {
                let (w, h) =
                    arg.split_once(',').ok_or_else(|| Error::Config(format!("rect range needs W,H: `{s}`")))?;
                RangeSpec::Rect { half_width: num(w)?, half_height: num(h)? }
            }
            "profile" => Self::from_csv(Path::new(arg))?,
            _ => return Err(Error::Config(format!("unknown range kind `{kind}`"))),
        };
        r.validate()?;
        Ok(r)
    }

    /// Reads a tabulated profile from a CSV with header `a,h`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
        let (mut a, mut h) = (Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("bad profile row {:?} in {}", rec, path.display())))
            };
            a.push(num(0)?);
            h.push(num(1)?);
        }
        let r = RangeSpec::Profile { a, h };
        r.validate()?;
        Ok(r)
    }

    /// `max{a : (a, b) ∈ 𝐑}`.
    pub fn max_abscissa(&self) -> f64 {
        match self {
            RangeSpec::Disc { radius } | RangeSpec::Diamond { radius } => *radius,
            RangeSpec::Rect { half_width, .. } => *half_width,
            RangeSpec::Profile { a, .. } => a[a.len() - 1],
        }
    }

    /// Upper profile `u(a)`, `-∞` outside `[-a_max, a_max]`.
    pub fn upper(&self, a: f64) -> f64 {
        let amax = self.max_abscissa();
        if !(a.abs() <= amax) {
            return f64::NEG_INFINITY;
        }
        match self {
            RangeSpec::Disc { radius } => (radius * radius - a * a).max(0.0).sqrt(),
            RangeSpec::Diamond { radius } => radius - a.abs(),
            RangeSpec::Rect { half_height, .. } => *half_height,
            RangeSpec::Profile { a: xs, h } => {
                let x = if xs[0] == 0.0 { a.abs() } else { a };
                let i = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
                let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                h[i - 1] + w * (h[i] - h[i - 1])
            }
        }
    }

    /// Lower profile `-u(-a)`.
    pub fn lower(&self, a: f64) -> f64 {
        -self.upper(-a)
    }

    /// Whether the offset `(a, b)` lies in the range.
    pub fn contains(&self, a: f64, b: f64) -> bool {
        b <= self.upper(a) && b >= self.lower(a)
    }
}

/// Where line of sight from a point is cut at every altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stoppage {
    pub x: f64,
    /// Height of the stopping building; `None` at the cap.
    pub height: Option<f64>,
}

/// First building right of `point` taller than the shifted upper profile,
/// capped at `point.x + a_max`.
pub fn stoppage_point(l: &mut Landscape, point: Point, range: &RangeSpec) -> Result<Stoppage> {
    let cap = point.x + range.max_abscissa();
    if l.covered().1 < cap {
        l.extend_right_to(cap)?;
    }
    let bs = l.buildings();
    let lo = l.first_after(point.x);
    for b in &bs[lo..] {
        if b.x > cap {
            break;
        }
        if b.h > point.y + range.upper(b.x - point.x) {
            return Ok(Stoppage { x: b.x, height: Some(b.h) });
        }
    }
    Ok(Stoppage { x: cap, height: None })
}

/// Steepest in-range building with base strictly before the stoppage point.
pub fn blocking_building_gr(l: &mut Landscape, point: Point, range: &RangeSpec) -> Result<Option<Building>> {
    let stop = stoppage_point(l, point, range)?;
    let bs = l.buildings();
    let lo = l.first_after(point.x);
    let mut best: Option<(f64, Building)> = None;
    for b in bs[lo..].iter().take_while(|b| b.x < stop.x) {
        if !range.contains(b.x - point.x, b.h - point.y) {
            continue;
        }
        let t = (b.h - point.y) / (b.x - point.x);
        if best.is_none_or(|(s, _)| t > s) {
            best = Some((t, *b));
        }
    }
    Ok(best.map(|(_, b)| b))
}

const CUM_NODES: usize = 64;

/// Law of the stoppage point of a fixed point: a density on
/// `[x, x + a_max)` and an atom at the cap.
#[derive(Debug, Clone)]
pub struct StoppageLaw {
    profile: IntensityProfile,
    heights: HeightModel,
    range: RangeSpec,
    point: Point,
    cap: f64,
    grid: Vec<f64>,
    cum: Vec<f64>,
}

impl StoppageLaw {
    pub fn new(profile: &IntensityProfile, heights: &HeightModel, point: Point, range: &RangeSpec) -> Self {
        let cap = point.x + range.max_abscissa();
        let mut law = StoppageLaw {
            profile: profile.clone(),
            heights: heights.clone(),
            range: range.clone(),
            point,
            cap,
            grid: Vec::new(),
            cum: Vec::new(),
        };
        let grid: Vec<f64> = (0..=CUM_NODES).map(|k| point.x + (cap - point.x) * k as f64 / CUM_NODES as f64).collect();
        let mut cum = vec![0.0];
        for w in grid.windows(2) {
            let last = *cum.last().expect("nonempty");
            cum.push(last + law.hazard_integral(w[0], w[1]));
        }
        law.grid = grid;
        law.cum = cum;
        law
    }

    /// Intensity of stoppers at `u`: `λ(u) (1 - F(y + u_𝐑(u - x)))`.
    pub fn hazard(&self, u: f64) -> f64 {
        self.profile.rate(u) * self.heights.tail(self.point.y + self.range.upper(u - self.point.x))
    }

    fn hazard_integral(&self, a: f64, b: f64) -> f64 {
        self.profile
            .pieces(a, b)
            .into_iter()
            .map(|(lo, hi, rate)| {
                rate * integrate(
                    |u| self.heights.tail(self.point.y + self.range.upper(u - self.point.x)),
                    lo,
                    hi,
                    Tol::new(1e-14, 1e-12),
                )
                .value
            })
            .sum()
    }

    /// `∫_x^t hazard`, for `t` clamped to `[x, cap]`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let t = t.clamp(self.point.x, self.cap);
        let k = self.grid.partition_point(|g| *g <= t).clamp(1, self.grid.len() - 1) - 1;
        self.cum[k] + self.hazard_integral(self.grid[k], t)
    }

    /// `P(X_stop ≥ t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= self.point.x {
            1.0
        } else if t > self.cap {
            0.0
        } else {
            (-self.cumulative_hazard(t)).exp()
        }
    }

    /// `P(X_stop ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t >= self.cap {
            1.0
        } else if t < self.point.x {
            0.0
        } else {
            -(-self.cumulative_hazard(t)).exp_m1()
        }
    }

    /// Density of the continuous part.
    pub fn density(&self, u: f64) -> f64 {
        if !(u >= self.point.x && u < self.cap) {
            return 0.0;
        }
        self.hazard(u) * (-self.cumulative_hazard(u)).exp()
    }

    /// Mass of the atom at the cap.
    pub fn atom(&self) -> f64 {
        (-self.cum[self.cum.len() - 1]).exp()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

/// `w((X, H), (x, h))`: probability that, given a building at `(x, h)` seen
/// from `(X, H)` along slope `t`, nothing beyond it spoils the choice. On
/// `(x, X_stop)` no building may rise above `max(min(line, upper), lower)`;
/// the first one above the upper profile is the stopper.
fn w_factor(lambda: f64, heights: &HeightModel, range: &RangeSpec, from: Point, at: Point) -> f64 {
    let t = (at.y - from.y) / (at.x - from.x);
    let cap = from.x + range.max_abscissa();
    let up = |a: f64| from.y + range.upper(a - from.x);
    let low = |a: f64| from.y + range.lower(a - from.x);
    let phi = |a: f64| heights.tail((at.y + t * (a - at.x)).min(up(a)).max(low(a)));
    let inner = Tol::new(1e-13, 1e-10);
    let big_phi = |u: f64| lambda * integrate(phi, at.x, u, inner).value;
    let outer =
        integrate(|u| lambda * heights.tail(up(u)) * (-big_phi(u)).exp(), at.x, cap, Tol::new(1e-11, 1e-8)).value;
    outer + (-big_phi(cap)).exp()
}

/// Density of the blocking building at `(x, h)` from `(X, H)` against
/// `Leb ⊗ 𝓛`, restricted to its existence.
pub fn density_gr(lambda: f64, heights: &HeightModel, range: &RangeSpec, from: Point, at: Point) -> f64 {
    let dx = at.x - from.x;
    if !(dx > 0.0) || !range.contains(dx, at.y - from.y) {
        return 0.0;
    }
    let t = (at.y - from.y) / dx;
    let below = heights.line_mass(from.y, t, dx);
    lambda * (-lambda * below).exp() * w_factor(lambda, heights, range, from, at)
}

/// Probability that no in-range building precedes the stoppage point.
pub fn prob_none_gr(lambda: f64, heights: &HeightModel, range: &RangeSpec, from: Point) -> f64 {
    let cap = from.x + range.max_abscissa();
    let up = |a: f64| from.y + range.upper(a - from.x);
    let low = |a: f64| from.y + range.lower(a - from.x);
    let inner = Tol::new(1e-13, 1e-10);
    let psi = |u: f64| lambda * integrate(|a| heights.tail(low(a)), from.x, u, inner).value;
    let outer = integrate(|u| lambda * heights.tail(up(u)) * (-psi(u)).exp(), from.x, cap, Tol::new(1e-11, 1e-8)).value;
    outer + (-psi(cap)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_range::horizontal::{blocking_building_hr, HrBlocked};
    use crate::quad::{gauss_legendre_on, quad};
    use crate::validation::{ks_distance, par_map, Ecdf, McReport};
    use crate::Stream;
    use rand::SeedableRng;

    fn exp1() -> HeightModel {
        HeightModel::exponential(1.0).unwrap()
    }

    #[test]
    fn profiles() {
        let d = RangeSpec::Disc { radius: 1.0 };
        assert_eq!(d.upper(0.0), 1.0);
        assert!((d.upper(0.6) - 0.8).abs() < 1e-15);
        assert_eq!(d.upper(1.1), f64::NEG_INFINITY);
        assert!(d.contains(0.6, -0.8) && !d.contains(0.6, 0.81));
        let p = RangeSpec::Profile { a: vec![0.0, 1.0, 2.0], h: vec![1.0, 0.8, 0.0] };
        p.validate().unwrap();
        assert!((p.upper(-1.5) - 0.4).abs() < 1e-15);
        assert!(RangeSpec::Profile { a: vec![0.0, 1.0, 2.0], h: vec![1.0, 0.2, 0.1] }.validate().is_err());
        assert_eq!(
            RangeSpec::parse("rect:2,inf").unwrap(),
            RangeSpec::Rect { half_width: 2.0, half_height: f64::INFINITY }
        );
        assert_eq!(RangeSpec::parse("disc:1").unwrap(), d);
        assert!(RangeSpec::parse("disc:-1").is_err());
        assert!(RangeSpec::parse("blob:1").is_err());
        let spec: RangeSpec = serde_json::from_str(r#"{"kind":"diamond","radius":2.0}"#).unwrap();
        assert_eq!(spec.upper(0.5), 1.5);
    }

    #[test]
    fn profile_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        std::fs::write(&f, "a,h\n-1,0\n0,1\n1,0\n").unwrap();
        let r = RangeSpec::parse(&format!("profile:{}", f.display())).unwrap();
        assert_eq!(r.upper(0.5), 0.5);
        assert_eq!(r.max_abscissa(), 1.0);
    }

    fn fixed(bs: Vec<Building>, b: f64) -> Landscape {
        Landscape::from_buildings(bs, (0.0, b), &IntensityProfile::Constant(1.0), &exp1()).unwrap()
    }

    #[test]
    fn stoppage_examples() {
        let d = RangeSpec::Disc { radius: 1.0 };
        let mut l = fixed(vec![], 1.0);
        assert_eq!(stoppage_point(&mut l, Point::new(0.0, 0.0), &d).unwrap(), Stoppage { x: 1.0, height: None });
        let mut l = fixed(vec![Building::new(0.3, 0.5), Building::new(0.6, 2.0), Building::new(0.7, 0.1)], 1.0);
        let s = stoppage_point(&mut l, Point::new(0.0, 0.0), &d).unwrap();
        assert_eq!(s, Stoppage { x: 0.6, height: Some(2.0) });
        // The low building beyond the stopper is not visible.
        let b = blocking_building_gr(&mut l, Point::new(0.0, 0.0), &d).unwrap();
        assert_eq!(b, Some(Building::new(0.3, 0.5)));
    }

    #[test]
    fn tall_building_outside_the_ball_hides_what_is_behind() {
        let d = RangeSpec::Disc { radius: 2.0 };
        // (1.2, 1.7) would be steepest but (1.0, 3.0) pokes above the disc.
        let mut l = fixed(vec![Building::new(0.5, 0.2), Building::new(1.0, 3.0), Building::new(1.2, 1.5)], 2.0);
        let b = blocking_building_gr(&mut l, Point::new(0.0, 0.0), &d).unwrap();
        assert_eq!(b, Some(Building::new(0.5, 0.2)));
    }

    #[test]
    fn stoppage_law_normalises() {
        let d = RangeSpec::Disc { radius: 1.0 };
        let law = StoppageLaw::new(&IntensityProfile::Constant(1.0), &exp1(), Point::new(0.0, 0.0), &d);
        assert_eq!(law.survival(0.0), 1.0);
        let mass = quad(|u| law.density(u), 0.0, 1.0, 1e-13, 1e-12);
        assert!((mass + law.atom() - 1.0).abs() < 1e-8, "{}", mass + law.atom());
        // An infinitely tall rectangle never stops line of sight.
        let r = RangeSpec::Rect { half_width: 1.0, half_height: f64::INFINITY };
        let law = StoppageLaw::new(&IntensityProfile::Constant(1.0), &exp1(), Point::new(0.0, 0.0), &r);
        assert_eq!(law.atom(), 1.0);
    }

    #[test]
    fn stoppage_ecdf_matches_law() {
        let d = RangeSpec::Disc { radius: 1.0 };
        let m = exp1();
        let prof = IntensityProfile::Constant(1.0);
        let xs: Vec<f64> = par_map(20_000, 6, None, |_, s| {
            let mut l = Landscape::lazy(&prof, &m, 0.0, s.clone());
            stoppage_point(&mut l, Point::new(0.0, 0.0), &d).unwrap().x
        });
        let law = StoppageLaw::new(&prof, &m, Point::new(0.0, 0.0), &d);
        let ks = ks_distance(&Ecdf::new(xs).unwrap(), |t| law.cdf(t));
        assert!(ks < 0.02, "{ks}");
    }

    #[test]
    fn density_edge_cases() {
        let d = RangeSpec::Disc { radius: 2.0 };
        let m = exp1();
        let o = Point::new(0.0, 0.0);
        assert_eq!(density_gr(1.0, &m, &d, o, Point::new(1.5, 1.5)), 0.0);
        assert_eq!(density_gr(1.0, &m, &d, o, Point::new(-0.5, 0.5)), 0.0);
        let level = density_gr(1.0, &m, &d, Point::new(0.0, 1.0), Point::new(1.0, 1.0));
        assert!(level.is_finite() && level > 0.0);
        let near = density_gr(1.0, &m, &d, Point::new(0.0, 1.0), Point::new(1.0, 1.0 + 1e-9));
        assert!((near - level).abs() < 1e-6 * level);
    }

    #[test]
    fn density_and_none_sum_to_one() {
        let d = RangeSpec::Disc { radius: 2.0 };
        let m = exp1();
        let o = Point::new(0.0, 0.0);
        // Product Gauss–Legendre over the in-range region {0 < x < 2, 0 < h < u(x)}.
        let mut total = prob_none_gr(1.0, &m, &d, o);
        for (x, wx) in gauss_legendre_on(32, 0.0, 2.0) {
            for (h, wh) in gauss_legendre_on(32, 0.0, d.upper(x)) {
                total += wx * wh * density_gr(1.0, &m, &d, o, Point::new(x, h)) * (-h).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn prob_none_matches_mc() {
        let d = RangeSpec::Disc { radius: 2.0 };
        let m = exp1();
        let prof = IntensityProfile::Constant(1.0);
        let n = 40_000u64;
        let none = par_map(n, 12, None, |_, s| {
            let mut l = Landscape::lazy(&prof, &m, 0.0, s.clone());
            blocking_building_gr(&mut l, Point::new(0.0, 0.0), &d).unwrap().is_none()
        });
        let k = none.iter().filter(|v| **v).count();
        let r = McReport::proportion("none", k, n as usize, 12, 0.0).unwrap();
        assert!(r.sigmas_from(prob_none_gr(1.0, &m, &d, Point::new(0.0, 0.0))) < 3.0, "{r:?}");
    }

    #[test]
    fn infinite_rectangle_reduces_to_horizontal_range() {
        let m = HeightModel::uniform(3.0).unwrap();
        let prof = IntensityProfile::Constant(1.5);
        let r = RangeSpec::Rect { half_width: 2.0, half_height: f64::INFINITY };
        for seed in 0..300 {
            let mut l = Landscape::generate(&prof, &m, 0.0, 10.0, Stream::seed_from_u64(seed));
            let p = Point::new(1.0, 0.4);
            let a = blocking_building_gr(&mut l, p, &r).unwrap();
            let b = blocking_building_hr(&mut l, p, 2.0).unwrap();
            match (a, b) {
                (None, HrBlocked::Cemetery) => {}
                (Some(x), HrBlocked::Building(y)) => assert_eq!(x, y),
                other => panic!("{other:?}"),
            }
            if let Some(bb) = a {
                let s = stoppage_point(&mut l, p, &r).unwrap();
                assert!(bb.x < s.x);
            }
        }
    }
}
