//! Horizontal finite range `R`: a point is relayed by the steepest building
//! with base in `(x, x + R]`, and the chain dies (cemetery) when that strip
//! is empty.
//!
//! The hop law is written in the coordinates `(x̃, h)` of hop length and new
//! height. From the state `(x̃_prev, T, H)` the strip `(X, X + r']`, with
//! `r' = R - x̃_prev`, is already known to hold no building above the line of
//! slope `T` through the current top; the rest of the strip is fresh. With
//! `M(a, s, len) = ∫_0^len (1 - F(a + s u)) du` the hop density against
//! `Leb ⊗ 𝓛` is
//!
//! ```text
//! λ exp(-λ [M(H, t∧T, r') - M(H, T, r') + M(H, t, R) - M(H, t, r')])
//!   · 1{0 < x̃ ≤ R} · 1{x̃ > r' or t ≤ T},      t = (h - H) / x̃
//! ```
//!
//! and the cemetery has mass `exp(-λ [R - M(H, T, r')])`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::landscape::{Building, IntensityProfile, Landscape};
use crate::quad::gauss_legendre_on;
use crate::validation::{par_map, McReport};
use crate::{Point, Stream};

/// Result of a finite-range blockage query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HrBlocked {
    Building(Building),
    Cemetery,
}

/// Steepest building with base in `(x, x + R]`; ties go to the nearest.
pub fn blocking_building_hr(l: &mut Landscape, point: Point, range: f64) -> Result<HrBlocked> {
    if !(range > 0.0) {
        return Err(Error::InvalidModel(format!("range must be positive, got {range}")));
    }
    let reach = point.x + range;
    if l.covered().1 < reach {
        l.extend_right_to(reach)?;
    }
    let bs = l.buildings();
    let lo = l.first_after(point.x);
    let hi = bs.partition_point(|b| b.x <= reach);
    let mut best: Option<(f64, Building)> = None;
    for b in &bs[lo..hi] {
        let t = (b.h - point.y) / (b.x - point.x);
        if best.is_none_or(|(s, _)| t > s) {
            best = Some((t, *b));
        }
    }
    Ok(best.map_or(HrBlocked::Cemetery, |(_, b)| HrBlocked::Building(b)))
}

/// Finite-range shade of `blocker` seen from `source`: points in range below
/// the line through the blocker, plus everything out of range.
pub fn finite_shade_contains(source: Point, blocker: Building, query: Point, range: f64) -> bool {
    if query.x > source.x + range {
        return true;
    }
    if query.x < blocker.x {
        return false;
    }
    (query.y - source.y) * (blocker.x - source.x) <= (blocker.h - source.y) * (query.x - source.x)
}

/// State of the chain `(x̃, t, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FiniteState {
    Alive { x_tilde: f64, t: f64, h: f64 },
    Cemetery,
}

impl FiniteState {
    /// A fresh user at height `h`: no hop yet, so nothing is known.
    pub fn start(h: f64) -> Self {
        FiniteState::Alive { x_tilde: 0.0, t: f64::INFINITY, h }
    }

    pub fn is_cemetery(&self) -> bool {
        matches!(self, FiniteState::Cemetery)
    }
}

fn m(heights: &HeightModel, a: f64, s: f64, len: f64) -> f64 {
    if s == f64::INFINITY {
        return 0.0;
    }
    heights.line_mass(a, s, len)
}

/// Density of the next hop `(x̃, h)` against `Leb ⊗ 𝓛` (zero from the
/// cemetery).
pub fn hop_density(lambda: f64, heights: &HeightModel, range: f64, state: FiniteState, x_tilde: f64, h: f64) -> f64 {
    let FiniteState::Alive { x_tilde: prev, t: big_t, h: big_h } = state else {
        return 0.0;
    };
    if !(x_tilde > 0.0 && x_tilde <= range) {
        return 0.0;
    }
    let r1 = (range - prev).max(0.0);
    let t = (h - big_h) / x_tilde;
    if x_tilde <= r1 && t > big_t {
        return 0.0;
    }
    let known = m(heights, big_h, t.min(big_t), r1) - m(heights, big_h, big_t, r1);
    let fresh = heights.line_mass(big_h + t * r1, t, range - r1);
    lambda * (-lambda * (known.max(0.0) + fresh)).exp()
}

/// Probability that the next strip holds no building.
pub fn cemetery_mass(lambda: f64, heights: &HeightModel, range: f64, state: FiniteState) -> f64 {
    match state {
        FiniteState::Cemetery => 1.0,
        FiniteState::Alive { x_tilde, t, h } => {
            let r1 = (range - x_tilde).max(0.0);
            (-lambda * (range - m(heights, h, t, r1))).exp()
        }
    }
}

/// Transition density in the coordinates `(t, h)` against `Leb ⊗ 𝓛`; the
/// hop length is then `(h - H) / t`.
pub fn kernel_vis_r(lambda: f64, heights: &HeightModel, range: f64, state: FiniteState, next: (f64, f64)) -> f64 {
    let FiniteState::Alive { h: big_h, .. } = state else {
        return 0.0;
    };
    let (t, h) = next;
    let x_tilde = (h - big_h) / t;
    if !(x_tilde > 0.0) {
        return 0.0;
    }
    hop_density(lambda, heights, range, state, x_tilde, h) * (h - big_h).abs() / (t * t)
}

/// `g_{N,R}`: density of a path that never hits the cemetery, against
/// `δ_{start} ⊗ (Leb ⊗ 𝓛)^N`.
pub fn density_gnr(lambda: f64, heights: &HeightModel, range: f64, path: &[Point]) -> f64 {
    let Some(first) = path.first() else {
        return 0.0;
    };
    let mut state = FiniteState::start(first.y);
    let mut d = 1.0;
    for w in path.windows(2) {
        let x_tilde = w[1].x - w[0].x;
        d *= hop_density(lambda, heights, range, state, x_tilde, w[1].y);
        if d == 0.0 {
            return 0.0;
        }
        state = FiniteState::Alive { x_tilde, t: (w[1].y - w[0].y) / x_tilde, h: w[1].y };
    }
    d
}

/// Samples a finite-range path of at most `n_hops` hops from `start`,
/// stopping early at the cemetery. Each entry is `(position, state)`.
pub fn trajectory_hr(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    start: Point,
    n_hops: usize,
    stream: Stream,
) -> Result<Vec<(Point, FiniteState)>> {
    let mut l = Landscape::lazy(profile, heights, start.x, stream);
    let mut cur = start;
    let mut out = vec![(start, FiniteState::start(start.y))];
    for _ in 0..n_hops {
        match blocking_building_hr(&mut l, cur, range)? {
            HrBlocked::Cemetery => {
                out.push((cur, FiniteState::Cemetery));
                break;
            }
            HrBlocked::Building(b) => {
                let x_tilde = b.x - cur.x;
                out.push((b.top(), FiniteState::Alive { x_tilde, t: (b.h - cur.y) / x_tilde, h: b.h }));
                l.discard_left_of(b.x);
                cur = b.top();
            }
        }
    }
    Ok(out)
}

/// Hard cap on the number of hops of one hitting-time run.
const MAX_HOPS: u64 = 10_000_000;

/// Number of hops before the cemetery for a fresh user at `(0, h)`.
pub fn hitting_time_sample(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    h: f64,
    stream: Stream,
) -> Result<u64> {
    let mut l = Landscape::lazy(profile, heights, 0.0, stream);
    let mut cur = Point::new(0.0, h);
    let mut n = 0;
    while n < MAX_HOPS {
        match blocking_building_hr(&mut l, cur, range)? {
            HrBlocked::Cemetery => return Ok(n),
            HrBlocked::Building(b) => {
                n += 1;
                l.discard_left_of(b.x);
                cur = b.top();
            }
        }
    }
    Err(Error::TruncationBudgetExceeded(MAX_HOPS as f64))
}

fn constant_rate(profile: &IntensityProfile) -> Result<f64> {
    profile.constant().ok_or_else(|| Error::InvalidModel("zone statistics need a constant intensity".into()))
}

/// Steepest building among `bs` with base in `(x, x + R]`, as an index.
fn argmax_in_range(bs: &[Building], p: Point, range: f64) -> Option<usize> {
    let lo = bs.partition_point(|b| b.x <= p.x);
    let hi = bs.partition_point(|b| b.x <= p.x + range);
    let mut best: Option<(f64, usize)> = None;
    for (j, b) in bs.iter().enumerate().take(hi).skip(lo) {
        let t = (b.h - p.y) / (b.x - p.x);
        if best.is_none_or(|(s, _)| t > s) {
            best = Some((t, j));
        }
    }
    best.map(|(_, j)| j)
}

/// One direct sample of the zone length of a Palm root `(0, H)`: users at
/// height 0 are thrown on `[-span, 0)` at rate `user_rate` and those whose
/// chain reaches the root are counted.
pub fn direct_zone_length_sample(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    span: f64,
    user_rate: f64,
    mut stream: Stream,
) -> Result<f64> {
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};
    let root_h = heights.sample(&mut stream);
    let n_users =
        Poisson::new(user_rate * span).map_err(|e| Error::Config(e.to_string()))?.sample(&mut stream) as usize;
    let users: Vec<f64> = (0..n_users).map(|_| -span * stream.random::<f64>()).collect();
    let mut l = Landscape::generate(profile, heights, -span, range, stream);
    l.palm_add(Building::new(0.0, root_h))?;
    let bs = l.buildings();
    let root = l.find(0.0).expect("root was inserted");
    let mut fate = vec![false; bs.len()];
    fate[root] = true;
    for i in (0..root).rev() {
        fate[i] = argmax_in_range(bs, bs[i].top(), range).is_some_and(|j| fate[j]);
    }
    let hits =
        users.iter().filter(|&&u| argmax_in_range(bs, Point::new(u, 0.0), range).is_some_and(|j| fate[j])).count();
    Ok(hits as f64 / user_rate)
}

/// The two estimators of the expected zone length of a typical building.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneLengthReport {
    /// `E[T] / λ` from hitting times of the chain.
    pub via_hitting_time: McReport,
    /// Users counted inside simulated zones.
    pub direct: McReport,
}

impl ZoneLengthReport {
    pub fn agree(&self) -> bool {
        self.via_hitting_time.overlaps(&self.direct)
    }
}

/// Mean hitting time `E[T_h] / λ`, one chain per replication.
pub fn zone_length_via_hitting_time(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    h: f64,
    n_reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<McReport> {
    let lambda = constant_rate(profile)?;
    let t: Vec<Result<u64>> =
        par_map(n_reps, seed, threads, |_, s| hitting_time_sample(profile, heights, range, h, s.clone()));
    let t: Vec<f64> = t.into_iter().map(|r| r.map(|v| v as f64 / lambda)).collect::<Result<_>>()?;
    McReport::mean("zone_length_hitting_time", &t, seed, 0.0)
}

/// Both estimators of `E[ℓ(Z(0, H))]`. The direct estimator uses an
/// independent stream family and a user window of `span` (default `50 R`).
pub fn expected_zone_length_hr(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    n_reps: u64,
    seed: u64,
    threads: Option<usize>,
    span: Option<f64>,
) -> Result<ZoneLengthReport> {
    let lambda = constant_rate(profile)?;
    let via = zone_length_via_hitting_time(profile, heights, range, 0.0, n_reps, seed, threads)?;
    let span = span.unwrap_or(50.0 * range);
    let direct_seed = seed ^ 0x5a5a_5a5a_5a5a_5a5a;
    let d: Vec<Result<f64>> = par_map(n_reps, direct_seed, threads, |_, s| {
        direct_zone_length_sample(profile, heights, range, span, 4.0 * lambda, s.clone())
    });
    let d: Vec<f64> = d.into_iter().collect::<Result<_>>()?;
    let direct = McReport::mean("zone_length_direct", &d, direct_seed, 0.0)?;
    Ok(ZoneLengthReport { via_hitting_time: via, direct })
}

/// Expected zone area `∫_0^q E[T_h]/λ dh`, truncated at the height `q` with
/// `1 - F(q) < 1e-4`, by `n_nodes`-point Gauss–Legendre over `h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaReport {
    pub area: McReport,
    pub truncation_height: f64,
    /// `(h, E[T_h]/λ)` at the quadrature nodes.
    pub nodes: Vec<(f64, McReport)>,
}

pub fn expected_zone_area_hr(
    profile: &IntensityProfile,
    heights: &HeightModel,
    range: f64,
    n_nodes: usize,
    n_reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<AreaReport> {
    let q = heights.quantile(1.0 - 1e-4).min(heights.sup_support());
    let rule = gauss_legendre_on(n_nodes.max(1), 0.0, q);
    let mut nodes = Vec::with_capacity(rule.len());
    let (mut est, mut var) = (0.0, 0.0);
    for (k, &(h, w)) in rule.iter().enumerate() {
        let r =
            zone_length_via_hitting_time(profile, heights, range, h, n_reps, seed.wrapping_add(k as u64 + 1), threads)?;
        est += w * r.estimate;
        var += w * w * r.std_error * r.std_error;
        nodes.push((h, r));
    }
    let se = var.sqrt();
    let z = 1.959_963_984_540_054;
    let area = McReport {
        label: "zone_area".into(),
        estimate: est,
        ci95: (est - z * se, est + z * se),
        std_error: se,
        n_reps: n_reps as usize,
        seed,
        censored_fraction: 0.0,
    };
    Ok(AreaReport { area, truncation_height: q, nodes })
}
