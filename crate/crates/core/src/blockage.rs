//! Infinite-range relaying: the blocking building, blockage trajectories,
//! the trajectory density `g_N` and the Markov kernel `vis`.
//!
//! The argmax over the whole half-line is made computable by extending the
//! landscape until the probability that an unseen building beats the current
//! candidate drops below `trunc_eps`. That probability is exact:
//! `1 - exp(-∫_b^∞ λ(u)(1 - F(y + t*(u - x))) du)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::landscape::{line_exceedance_mass, Building, IntensityProfile, Landscape};
use crate::{Point, Stream};

/// Relaying scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `τ`: plain slope argmax.
    #[serde(alias = "tau")]
    Infinite,
    /// `τ1`: a building of maximal height relays to itself.
    #[serde(alias = "tau1")]
    SelfAbsorbing,
    /// `τ2`: a building of maximal height relays to the next one.
    #[serde(alias = "tau2")]
    NextMax,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infinite" | "tau" => Ok(Scheme::Infinite),
            "self_absorbing" | "self-absorbing" | "tau1" => Ok(Scheme::SelfAbsorbing),
            "next_max" | "next-max" | "tau2" => Ok(Scheme::NextMax),
            _ => Err(Error::Config(format!("unknown scheme {s:?} (expected tau, tau1 or tau2)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Infinite => "tau",
            Scheme::SelfAbsorbing => "tau1",
            Scheme::NextMax => "tau2",
        })
    }
}

/// Lookahead control for unbounded argmax searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    /// Accepted probability that an unseen building changes the answer.
    pub trunc_eps: f64,
    /// Maximal lookahead, in expected number of relevant buildings: the width
    /// limit is `budget / (λ_max · 𝓛([y, ∞)))` for a search from height `y`.
    pub budget: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { trunc_eps: 1e-9, budget: 1e4 }
    }
}

/// Outcome of [`blocking_building`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Blocked {
    Building(Building),
    AbsorbedSelf,
}

/// `(b - y) / (a - x)`.
pub fn blockage_slope(point: Point, building: Building) -> Result<f64> {
    if building.x == point.x {
        return Err(Error::SamePosition(point.x));
    }
    Ok((building.h - point.y) / (building.x - point.x))
}

/// Whether `query` lies in the shade cast by `blocker` seen from `source`.
pub fn shade_contains(source: Point, blocker: Building, query: Point) -> bool {
    if query.x < blocker.x {
        return false;
    }
    if query.x == source.x {
        return query.y <= source.y;
    }
    // Cross-multiplied to stay exact at the blocker itself.
    (query.y - source.y) * (blocker.x - source.x) <= (blocker.h - source.y) * (query.x - source.x)
}

/// Probability that some building with base beyond `from` rises strictly
/// above the line through `p` with slope `t`.
fn beyond_probability(profile: &IntensityProfile, heights: &HeightModel, from: f64, p: Point, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mass = line_exceedance_mass(profile, heights, from, f64::INFINITY, p, t);
    -(-mass).exp_m1()
}

fn relevant_intensity(l: &Landscape, y: f64) -> f64 {
    let y = y.max(l.floor());
    l.profile().max_rate() * l.heights().tail_incl(y).max(f64::MIN_POSITIVE)
}

/// The building of `l` that relays `point`, extending `l` to the right as
/// needed.
pub fn blocking_building(l: &mut Landscape, point: Point, scheme: Scheme, tr: &Truncation) -> Result<Blocked> {
    let heights = l.heights().clone();
    let s = heights.sup_support();
    if point.y >= s {
        return match scheme {
            Scheme::SelfAbsorbing => Ok(Blocked::AbsorbedSelf),
            Scheme::NextMax => next_at_least(l, point, s, tr).map(Blocked::Building),
            Scheme::Infinite => Err(Error::IllDefined("no building is taller than the point")),
        };
    }
    let profile = l.profile().clone();
    let rel = relevant_intensity(l, point.y);
    let max_width = tr.budget / rel;
    let mut chunk = 16.0 / rel;
    let mut best: Option<(f64, usize)> = None;
    let mut i = l.first_after(point.x);
    loop {
        let bs = l.buildings();
        for (j, b) in bs.iter().enumerate().skip(i) {
            let slope = (b.h - point.y) / (b.x - point.x);
            if best.is_none_or(|(t, _)| slope > t) {
                best = Some((slope, j));
            }
        }
        i = bs.len();
        let (_, b) = l.covered();
        if let Some((t, j)) = best {
            if beyond_probability(&profile, &heights, b.max(point.x), point, t) < tr.trunc_eps {
                return Ok(Blocked::Building(l.buildings()[j]));
            }
        }
        if b - point.x > max_width {
            return Err(Error::TruncationBudgetExceeded(max_width));
        }
        l.extend_right(chunk)?;
        chunk *= 2.0;
    }
}

/// First building right of `point.x` with height at least `level`.
fn next_at_least(l: &mut Landscape, point: Point, level: f64, tr: &Truncation) -> Result<Building> {
    let rel = l.profile().max_rate() * l.heights().tail_incl(level);
    if rel <= 0.0 {
        return Err(Error::TruncationBudgetExceeded(0.0));
    }
    let max_width = tr.budget / rel;
    let mut chunk = 16.0 / rel;
    let mut i = l.first_after(point.x);
    loop {
        if let Some(b) = l.buildings()[i..].iter().find(|b| b.h >= level) {
            return Ok(*b);
        }
        i = l.len();
        let (_, b) = l.covered();
        if b - point.x > max_width {
            return Err(Error::TruncationBudgetExceeded(max_width));
        }
        l.extend_right(chunk)?;
        chunk *= 2.0;
    }
}

/// One state of the blockage chain. The start state has `t = +∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub x: f64,
    pub h: f64,
    pub t: f64,
    /// Set once a `τ1` chain has been absorbed at maximal height.
    pub absorbed: bool,
}

impl BlockState {
    pub fn start(p: Point) -> Self {
        BlockState { x: p.x, h: p.y, t: f64::INFINITY, absorbed: false }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.h)
    }
}

/// Samples `n_hops` steps of the chain from `start` on a fresh landscape
/// generated lazily from `stream`. Returns `n_hops + 1` states.
pub fn trajectory(
    profile: &IntensityProfile,
    heights: &HeightModel,
    start: Point,
    n_hops: usize,
    scheme: Scheme,
    stream: Stream,
    tr: &Truncation,
) -> Result<Vec<BlockState>> {
    trajectory_with(profile, heights, |_| start, n_hops, scheme, stream, tr)
}

/// As [`trajectory`], with the start point drawn by `start` from the stream.
pub fn trajectory_with<F: FnOnce(&mut Stream) -> Point>(
    profile: &IntensityProfile,
    heights: &HeightModel,
    start: F,
    n_hops: usize,
    scheme: Scheme,
    mut stream: Stream,
    tr: &Truncation,
) -> Result<Vec<BlockState>> {
    let p0 = start(&mut stream);
    let mut l = Landscape::lazy(profile, heights, p0.x, stream);
    let mut states = Vec::with_capacity(n_hops + 1);
    states.push(BlockState::start(p0));
    for _ in 0..n_hops {
        let cur = *states.last().expect("nonempty");
        if cur.absorbed {
            states.push(BlockState { t: 0.0, ..cur });
            continue;
        }
        // Nothing below the current height can matter from here on.
        l.raise_floor(cur.h);
        l.discard_left_of(cur.x);
        let next = match blocking_building(&mut l, cur.point(), scheme, tr)? {
            Blocked::AbsorbedSelf => BlockState { t: 0.0, absorbed: true, ..cur },
            Blocked::Building(b) => BlockState { x: b.x, h: b.h, t: (b.h - cur.h) / (b.x - cur.x), absorbed: false },
        };
        states.push(next);
    }
    Ok(states)
}

/// `𝔉(h) / t` with the convention `0 / 0 = 0` (a zero primitive means no
/// building can exceed the level, whatever the slope).
fn prim_over(heights: &HeightModel, h: f64, t: f64) -> f64 {
    let f = heights.primitive(h);
    if f == 0.0 {
        0.0
    } else {
        f / t
    }
}

/// Density `g_N` of the path `(x_i, h_i)_{i=0..N}` of the `τ` chain with
/// respect to `μ ⊗ (Leb ⊗ 𝓛)^N`, constant intensity `λ`.
pub fn density_gn(lambda: f64, heights: &HeightModel, path: &[Point]) -> f64 {
    let n = path.len().saturating_sub(1);
    if n == 0 {
        return 1.0;
    }
    let mut slopes = Vec::with_capacity(n);
    for w in path.windows(2) {
        if !(w[1].x > w[0].x) || w[1].y < w[0].y {
            return 0.0;
        }
        slopes.push((w[1].y - w[0].y) / (w[1].x - w[0].x));
    }
    if slopes.windows(2).any(|s| s[1] > s[0]) {
        return 0.0;
    }
    let mut e = -prim_over(heights, path[0].y, slopes[0]);
    for i in 1..n {
        e += prim_over(heights, path[i].y, slopes[i - 1]) - prim_over(heights, path[i].y, slopes[i]);
    }
    lambda.powi(n as i32) * (-lambda * e).exp()
}

/// Transition density `vis^{T,H}(t, h)` with respect to `Leb(t) ⊗ 𝓛(h)`.
pub fn kernel_density_vis(lambda: f64, heights: &HeightModel, prev: (f64, f64), next: (f64, f64)) -> f64 {
    let ((big_t, big_h), (t, h)) = (prev, next);
    if !(h > big_h && t > 0.0 && t <= big_t) {
        return 0.0;
    }
    let f = heights.primitive(big_h);
    let inv_t = if big_t.is_infinite() { 0.0 } else { 1.0 / big_t };
    (h - big_h) / (t * t) * lambda * (-lambda * f * (inv_t - 1.0 / t)).exp()
}

/// `P(t_next ≤ s)` under `vis^{T,H}`.
pub fn vis_slope_cdf(lambda: f64, heights: &HeightModel, big_t: f64, big_h: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= big_t {
        return 1.0;
    }
    let inv_t = if big_t.is_infinite() { 0.0 } else { 1.0 / big_t };
    (lambda * heights.primitive(big_h) * (1.0 / s - inv_t)).exp()
}

/// `P(h_next ≤ v)` under `vis^{T,H}` (it does not depend on `T`).
pub fn vis_height_cdf(heights: &HeightModel, big_h: f64, v: f64) -> f64 {
    if v <= big_h {
        return 0.0;
    }
    let f0 = heights.primitive(big_h);
    if f0 == 0.0 {
        return 1.0;
    }
    let num = heights.primitive(v) - f0 - (v - big_h) * heights.tail(v);
    (num / -f0).clamp(0.0, 1.0)
}

/// Law of the next state under a max-height scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKernel {
    /// Below height `S`: the `vis` density at the queried state.
    Density(f64),
    /// `τ1` at height `S`: a Dirac mass at the current building.
    SelfAtom { x: f64, mass: f64 },
    /// `τ2` at height `S`: hop to the next height-`S` building, exponential
    /// with the given rate; `density` is evaluated at the queried hop.
    MaxHeightHop { rate: f64, density: f64 },
}

/// Transition law under `scheme` from `prev` evaluated at `next`.
pub fn kernel_density_scheme(
    lambda: f64,
    heights: &HeightModel,
    scheme: Scheme,
    prev: BlockState,
    next: BlockState,
) -> Result<SchemeKernel> {
    let s = heights.sup_support();
    if scheme == Scheme::Infinite && heights.is_max_height_case() {
        return Err(Error::SchemeMismatch("scheme tau is ill-defined when the height law has an atom at its supremum"));
    }
    if prev.h < s || scheme == Scheme::Infinite {
        return Ok(SchemeKernel::Density(kernel_density_vis(lambda, heights, (prev.t, prev.h), (next.t, next.h))));
    }
    Ok(match scheme {
        Scheme::SelfAbsorbing => SchemeKernel::SelfAtom { x: prev.x, mass: 1.0 },
        _ => {
            let rate = lambda * heights.atom_at_sup();
            let d = next.x - prev.x;
            let density = if next.h == s && d > 0.0 { rate * (-rate * d).exp() } else { 0.0 };
            SchemeKernel::MaxHeightHop { rate, density }
        }
    })
}
