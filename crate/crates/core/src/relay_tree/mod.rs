//! The backward problem: which points end up relayed by a given building.
//!
//! A building `(α, β)` with blockage slope `t` collects every point of its
//! reverse shade `RS(α, β) = {x ≤ α, (β - y) ≥ t (α - x)}` lying right of its
//! shadow-cutting building, the rightmost building left of `α` outside the
//! reverse shade. The resulting zone is a trapezoid of ground length
//! `min(α - α_sc, β / t)`.

pub mod forest;
pub mod mass_transport;
pub mod zone_stats;

pub use forest::{
    build_forest, classify_eft, eft_diagnostics, foil_partition, foil_relation, EftClass, EftDiagnostics,
    FoilPartition, FoilRelation, Parent, RelayForest,
};
pub use mass_transport::{mass_transport_check, MassTransportReport};
pub use zone_stats::{
    expected_building_count, expected_zone_length_given_angle, expected_zone_length_palm, sample_zone_given_angle,
    sample_zone_palm, zone_length_cdf, zone_length_cdf_left, ZoneSample,
};

use serde::{Deserialize, Serialize};

use crate::blockage::{blocking_building, Blocked, Scheme, Truncation};
use crate::error::{Error, Result};
use crate::landscape::{Building, Landscape};
use crate::Point;

/// Inequality used in the reverse shade: `≥` for `τ`/`τ2`, `>` for `τ1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    Weak,
    Strict,
}

impl Strictness {
    pub fn of(scheme: Scheme) -> Self {
        match scheme {
            Scheme::SelfAbsorbing => Strictness::Strict,
            _ => Strictness::Weak,
        }
    }
}

/// Membership in the reverse shade of `apex` for blockage slope `slope`.
pub fn in_reverse_shade(apex: Building, slope: f64, q: Point, strictness: Strictness) -> bool {
    if q.x > apex.x {
        return false;
    }
    if q.x == apex.x {
        // Vertical below the apex: the slope towards the apex is +∞.
        return q.y <= apex.h;
    }
    let lhs = apex.h - q.y;
    let rhs = slope * (apex.x - q.x);
    match strictness {
        Strictness::Weak => lhs >= rhs,
        Strictness::Strict => lhs > rhs,
    }
}

/// Reverse-shade membership given the apex's blocking building.
pub fn reverse_shade_contains(apex: Building, blocker: Building, query: Point, strictness: Strictness) -> bool {
    let slope = (blocker.h - apex.h) / (blocker.x - apex.x);
    in_reverse_shade(apex, slope, query, strictness)
}

/// Blockage slope of a building under `scheme` (0 for a `τ1` self-loop).
pub fn apex_slope(l: &mut Landscape, apex: Building, scheme: Scheme, tr: &Truncation) -> Result<f64> {
    match blocking_building(l, apex.top(), scheme, tr)? {
        Blocked::AbsorbedSelf => Ok(0.0),
        Blocked::Building(b) => Ok((b.h - apex.h) / (b.x - apex.x)),
    }
}

/// Whether any building can ever violate the reverse-shade inequality.
fn violation_possible(l: &Landscape, apex: Building, slope: f64, strictness: Strictness) -> bool {
    if slope > 0.0 {
        return true;
    }
    let m = l.heights();
    let tail = match strictness {
        Strictness::Weak => m.tail(apex.h),
        Strictness::Strict => m.tail_incl(apex.h),
    };
    tail > 0.0 || slope < 0.0
}

/// The rightmost building left of `apex.x` outside the reverse shade, scanning
/// left (and extending the landscape) no further than `limit`. Returns `None`
/// when the scan reaches `limit` without finding one.
pub fn cutter_for_slope(
    l: &mut Landscape,
    apex: Building,
    slope: f64,
    strictness: Strictness,
    tr: &Truncation,
    limit: f64,
) -> Result<Option<Building>> {
    if !violation_possible(l, apex, slope, strictness) {
        if limit.is_finite() {
            l.extend_left_to(limit)?;
            return Ok(None);
        }
        return Err(Error::TruncationBudgetExceeded(f64::INFINITY));
    }
    let lam = l.profile().max_rate();
    let max_width = if slope > 0.0 {
        apex.h / slope + tr.budget / lam
    } else {
        let t = match strictness {
            Strictness::Weak => l.heights().tail(apex.h),
            Strictness::Strict => l.heights().tail_incl(apex.h),
        };
        tr.budget / (lam * t.max(f64::MIN_POSITIVE))
    };
    let mut chunk = 16.0 / lam;
    let mut i = l.first_at_or_after(apex.x);
    loop {
        let bs = l.buildings();
        for j in (0..i).rev() {
            if bs[j].x < limit {
                return Ok(None);
            }
            if !in_reverse_shade(apex, slope, bs[j].top(), strictness) {
                return Ok(Some(bs[j]));
            }
        }
        let (a, _) = l.covered();
        if a <= limit {
            return Ok(None);
        }
        if apex.x - a > max_width {
            return Err(Error::TruncationBudgetExceeded(max_width));
        }
        let before = l.len();
        let step = if limit.is_finite() { chunk.min(a - limit) } else { chunk };
        l.extend_left(step)?;
        i = l.len() - before;
        chunk *= 2.0;
    }
}

/// Shadow-cutting building of `apex` under `scheme`.
pub fn shadow_cutting_building(l: &mut Landscape, apex: Building, scheme: Scheme, tr: &Truncation) -> Result<Building> {
    let slope = apex_slope(l, apex, scheme, tr)?;
    cutter_for_slope(l, apex, slope, Strictness::of(scheme), tr, f64::NEG_INFINITY)?
        .ok_or(Error::TruncationBudgetExceeded(f64::INFINITY))
}

/// Zone of eventual relaying of a building.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayZone {
    pub apex: Building,
    pub slope: f64,
    pub strictness: Strictness,
    /// `max(α_sc, α - β/t)`; `-∞` for an unbounded zone.
    pub ground_left: f64,
    pub ground_length: f64,
    /// The shadow-cutting building, when it bounds the zone.
    pub cutter: Option<Building>,
}

impl RelayZone {
    /// Whether `q` is eventually relayed by the apex.
    pub fn contains(&self, q: Point) -> bool {
        if q == self.apex.top() {
            return true;
        }
        if q.x >= self.apex.x {
            return false;
        }
        in_reverse_shade(self.apex, self.slope, q, self.strictness) && self.cutter.is_none_or(|c| q.x >= c.x)
    }
}

/// Computes the relay zone of `apex`, extending `l` leftwards as needed.
pub fn relay_zone(l: &mut Landscape, apex: Building, scheme: Scheme, tr: &Truncation) -> Result<RelayZone> {
    let slope = apex_slope(l, apex, scheme, tr)?;
    relay_zone_with_slope(l, apex, slope, Strictness::of(scheme), tr)
}

/// As [`relay_zone`] with a known blockage slope.
pub fn relay_zone_with_slope(
    l: &mut Landscape,
    apex: Building,
    slope: f64,
    strictness: Strictness,
    tr: &Truncation,
) -> Result<RelayZone> {
    let bound = if slope > 0.0 { apex.x - apex.h / slope } else { f64::NEG_INFINITY };
    if bound.is_infinite() && !violation_possible(l, apex, slope, strictness) {
        return Ok(RelayZone {
            apex,
            slope,
            strictness,
            ground_left: f64::NEG_INFINITY,
            ground_length: f64::INFINITY,
            cutter: None,
        });
    }
    let cutter = cutter_for_slope(l, apex, slope, strictness, tr, bound)?;
    let ground_left = cutter.map_or(bound, |c| c.x.max(bound));
    Ok(RelayZone { apex, slope, strictness, ground_left, ground_length: apex.x - ground_left, cutter })
}

/// How [`is_eventually_relayed`] decides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayMethod {
    /// Follow the blockage chain from the point.
    Iterate,
    /// Test membership in the relay zone.
    Characterise,
}

/// Whether the chain started at `point` reaches `apex`.
pub fn is_eventually_relayed(
    l: &mut Landscape,
    point: Point,
    apex: Building,
    scheme: Scheme,
    method: RelayMethod,
    tr: &Truncation,
) -> Result<bool> {
    if point == apex.top() {
        return Ok(true);
    }
    if point.x >= apex.x {
        return Ok(false);
    }
    match method {
        RelayMethod::Characterise => Ok(relay_zone(l, apex, scheme, tr)?.contains(point)),
        RelayMethod::Iterate => {
            let mut cur = point;
            loop {
                match blocking_building(l, cur, scheme, tr)? {
                    Blocked::AbsorbedSelf => return Ok(false),
                    Blocked::Building(b) if b == apex => return Ok(true),
                    Blocked::Building(b) if b.x >= apex.x => return Ok(false),
                    Blocked::Building(b) => cur = b.top(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::{HeightModel, HeightSpec};
    use crate::landscape::IntensityProfile;
    use crate::Stream;
    use rand::{Rng, SeedableRng};

    fn example() -> Landscape {
        let bs =
            vec![Building::new(-2.0, 0.5), Building::new(-1.0, 2.9), Building::new(0.0, 3.0), Building::new(2.0, 4.0)];
        let m = HeightModel::uniform(4.0).unwrap();
        Landscape::from_buildings(bs, (-2.0, 2.0), &IntensityProfile::Constant(1.0), &m).unwrap()
    }

    #[test]
    fn reverse_shade_examples() {
        let apex = Building::new(0.0, 3.0);
        let blk = Building::new(2.0, 4.0);
        assert!(reverse_shade_contains(apex, blk, Point::new(0.0, 1.0), Strictness::Weak));
        assert!(reverse_shade_contains(apex, blk, Point::new(0.0, 3.0), Strictness::Strict));
        assert!(reverse_shade_contains(apex, blk, Point::new(-1.0, 2.4), Strictness::Weak));
        assert!(!reverse_shade_contains(apex, blk, Point::new(-1.0, 2.9), Strictness::Weak));
        assert!(reverse_shade_contains(apex, blk, Point::new(-1.0, 2.5), Strictness::Weak));
        assert!(!reverse_shade_contains(apex, blk, Point::new(-1.0, 2.5), Strictness::Strict));
    }

    #[test]
    fn cutter_and_relay_examples() {
        let tr = Truncation::default();
        let apex = Building::new(0.0, 3.0);
        let mut l = example();
        let c = shadow_cutting_building(&mut l, apex, Scheme::Infinite, &tr).unwrap();
        assert_eq!(c, Building::new(-1.0, 2.9));
        let p = Point::new(-0.5, 0.0);
        for m in [RelayMethod::Iterate, RelayMethod::Characterise] {
            assert!(is_eventually_relayed(&mut l, p, apex, Scheme::Infinite, m, &tr).unwrap());
            assert!(is_eventually_relayed(&mut l, apex.top(), apex, Scheme::Infinite, m, &tr).unwrap());
            assert!(!is_eventually_relayed(&mut l, Point::new(1.0, 0.0), apex, Scheme::Infinite, m, &tr).unwrap());
        }
        let z = relay_zone(&mut l, apex, Scheme::Infinite, &tr).unwrap();
        assert_eq!(z.ground_left, -1.0);
        assert_eq!(z.ground_length, 1.0);
    }

    #[test]
    fn level_blocker_is_cut_by_any_taller_neighbour() {
        let m = HeightModel::uniform(5.0).unwrap();
        let bs =
            vec![Building::new(-3.0, 2.5), Building::new(-1.0, 1.0), Building::new(0.0, 2.0), Building::new(1.0, 2.0)];
        let mut l = Landscape::from_buildings(bs, (-3.0, 1.0), &IntensityProfile::Constant(1.0), &m).unwrap();
        let c = cutter_for_slope(
            &mut l,
            Building::new(0.0, 2.0),
            0.0,
            Strictness::Weak,
            &Truncation::default(),
            f64::NEG_INFINITY,
        )
        .unwrap();
        assert_eq!(c, Some(Building::new(-3.0, 2.5)));
    }

    #[test]
    fn iterate_and_characterise_agree() {
        let tr = Truncation::default();
        let models = [
            (HeightModel::exponential(1.0).unwrap(), Scheme::Infinite),
            (HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap(), Scheme::SelfAbsorbing),
            (HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap(), Scheme::NextMax),
        ];
        let prof = IntensityProfile::Constant(1.0);
        let mut rng = Stream::seed_from_u64(17);
        let mut relayed = 0;
        let mut pairs = 0;
        for (m, scheme) in &models {
            for _ in 0..120 {
                let mut l = crate::landscape::generate_window(&prof, m, -30.0, 30.0, &mut rng);
                for _ in 0..35 {
                    let bs = l.buildings();
                    let k = rng.random_range(0..bs.len());
                    let apex = bs[k];
                    if apex.x < -20.0 || apex.x > 20.0 {
                        continue;
                    }
                    let q = if rng.random::<bool>() && k > 0 {
                        bs[rng.random_range(0..k)].top()
                    } else {
                        Point::new(
                            apex.x - 10.0 * rng.random::<f64>(),
                            (1.5 * apex.h * rng.random::<f64>()).min(m.sup_support()),
                        )
                    };
                    let a = is_eventually_relayed(&mut l, q, apex, *scheme, RelayMethod::Iterate, &tr);
                    let b = is_eventually_relayed(&mut l, q, apex, *scheme, RelayMethod::Characterise, &tr);
                    match (a, b) {
                        (Ok(a), Ok(b)) => {
                            assert_eq!(a, b, "{scheme:?} apex {apex:?} q {q:?}");
                            relayed += a as usize;
                            pairs += 1;
                        }
                        (Err(Error::TruncationBudgetExceeded(_)), _) | (_, Err(Error::TruncationBudgetExceeded(_))) => {
                        }
                        (a, b) => panic!("{a:?} {b:?}"),
                    }
                }
            }
        }
        assert!(pairs > 5000, "{pairs}");
        assert!(relayed > 500 && relayed < pairs - 500, "{relayed}/{pairs}");
    }

    #[test]
    fn zone_is_monotone_in_its_coordinates() {
        let tr = Truncation::default();
        let m = HeightModel::exponential(1.0).unwrap();
        let prof = IntensityProfile::Constant(1.0);
        let mut rng = Stream::seed_from_u64(5);
        for _ in 0..50 {
            let mut l = crate::landscape::generate_window(&prof, &m, -40.0, 0.0, &mut rng);
            l.palm_add(Building::new(0.0, 2.0)).unwrap();
            let z = relay_zone(&mut l, Building::new(0.0, 2.0), Scheme::Infinite, &tr).unwrap();
            for i in 0..20 {
                for j in 0..20 {
                    let q = Point::new(-(i as f64) * 0.2, j as f64 * 0.15);
                    if z.contains(q) {
                        if j > 0 {
                            assert!(z.contains(Point::new(q.x, q.y - 0.15)));
                        }
                        // Points straight below the apex are not relayed by it.
                        if i > 1 {
                            assert!(z.contains(Point::new(q.x + 0.2, q.y)));
                        }
                    }
                }
            }
        }
    }
}
