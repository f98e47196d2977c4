//! Closed forms for the ground length of relay zones and for the number of
//! buildings they contain, under a constant intensity `λ`.

use crate::blockage::{Scheme, Truncation};
use crate::error::Result;
use crate::heights::HeightModel;
use crate::landscape::{Building, IntensityProfile, Landscape};
use crate::quad::quad;
use crate::Stream;

use super::{relay_zone, relay_zone_with_slope, RelayZone, Strictness};

/// Exceedance mass `∫_0^s (1 - F(β - u·tanθ)) du` of the reverse-shade line,
/// or its strict analogue with `1 - F̃` on a level line.
fn shade_mass(heights: &HeightModel, beta: f64, tan_theta: f64, s: f64, strictness: Strictness) -> f64 {
    if tan_theta == 0.0 && strictness == Strictness::Strict {
        return s * heights.tail_incl(beta);
    }
    heights.line_mass(beta, -tan_theta, s)
}

/// `P(ℓ ≤ t)` for the ground length `ℓ = min(α - α_sc, β / tanθ)` of a
/// building of height `β` and blockage slope `tanθ`.
pub fn zone_length_cdf(
    lambda: f64,
    heights: &HeightModel,
    beta: f64,
    tan_theta: f64,
    t: f64,
    strictness: Strictness,
) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    if tan_theta > 0.0 && t >= beta / tan_theta {
        return 1.0;
    }
    -(-lambda * shade_mass(heights, beta, tan_theta, t, strictness)).exp_m1()
}

/// `P(ℓ < t)`: differs from [`zone_length_cdf`] only at the atom `β / tanθ`.
pub fn zone_length_cdf_left(
    lambda: f64,
    heights: &HeightModel,
    beta: f64,
    tan_theta: f64,
    t: f64,
    strictness: Strictness,
) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if tan_theta > 0.0 && t > beta / tan_theta {
        return 1.0;
    }
    -(-lambda * shade_mass(heights, beta, tan_theta, t, strictness)).exp_m1()
}

/// `E[ℓ]` given the apex height and slope; `+∞` for a level slope when no
/// building can cut the zone.
pub fn expected_zone_length_given_angle(
    lambda: f64,
    heights: &HeightModel,
    beta: f64,
    tan_theta: f64,
    strictness: Strictness,
) -> f64 {
    if tan_theta.is_infinite() {
        return 0.0;
    }
    if tan_theta == 0.0 {
        let rate = lambda * shade_mass(heights, beta, 0.0, 1.0, strictness);
        return if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    }
    let top = beta / tan_theta;
    quad(|s| (-lambda * heights.line_mass(beta, -tan_theta, s)).exp(), 0.0, top, 1e-14, 1e-11)
}

/// Mean number of buildings (apex excluded) inside the relay zone.
pub fn expected_building_count(lambda: f64, heights: &HeightModel, beta: f64, tan_theta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let el = expected_zone_length_given_angle(lambda, heights, beta, tan_theta, Strictness::Weak);
    let reach = -(-lambda * heights.line_mass(beta, -tan_theta, beta / tan_theta)).exp_m1();
    (lambda * el - reach).max(0.0)
}

/// Mean ground length of the zone of a Palm-typical building of height `β`.
pub fn expected_zone_length_palm(lambda: f64, heights: &HeightModel, beta: f64, scheme: Scheme) -> f64 {
    let s = heights.sup_support();
    if beta >= s {
        let p = heights.atom_at_sup();
        return match scheme {
            Scheme::SelfAbsorbing if p > 0.0 => 1.0 / (lambda * p),
            _ => f64::INFINITY,
        };
    }
    let fb = heights.primitive(beta);
    if heights.primitive(0.0) == 0.0 {
        return f64::INFINITY;
    }
    quad(
        |u| {
            let fu = heights.primitive(u);
            -fb / (lambda * fu * fu)
        },
        0.0,
        beta,
        1e-14,
        1e-11,
    )
}

/// One zone sample: ground length and number of buildings strictly inside
/// the zone, apex and cutter excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneSample {
    pub length: f64,
    pub count: usize,
}

fn count_inside(l: &Landscape, z: &RelayZone) -> usize {
    let bs = l.buildings();
    let lo = bs.partition_point(|b| b.x <= z.ground_left);
    let hi = bs.partition_point(|b| b.x < z.apex.x);
    hi.saturating_sub(lo)
}

/// Samples the zone of an apex `(0, β)` with a prescribed blockage slope; the
/// landscape to its left is fresh.
pub fn sample_zone_given_angle(
    profile: &IntensityProfile,
    heights: &HeightModel,
    beta: f64,
    tan_theta: f64,
    strictness: Strictness,
    stream: Stream,
    tr: &Truncation,
) -> Result<ZoneSample> {
    let mut l = Landscape::lazy(profile, heights, 0.0, stream);
    let apex = Building::new(0.0, beta);
    let z = relay_zone_with_slope(&mut l, apex, tan_theta, strictness, tr)?;
    Ok(ZoneSample { length: z.ground_length, count: count_inside(&l, &z) })
}

/// Samples the zone of a Palm root `(0, β)`, its blockage slope coming from
/// the sampled landscape on the right.
pub fn sample_zone_palm(
    profile: &IntensityProfile,
    heights: &HeightModel,
    beta: f64,
    scheme: Scheme,
    stream: Stream,
    tr: &Truncation,
) -> Result<ZoneSample> {
    let mut l = Landscape::lazy(profile, heights, 0.0, stream);
    let apex = Building::new(0.0, beta);
    l.palm_add(apex)?;
    l.raise_floor(beta);
    let z = relay_zone(&mut l, apex, scheme, tr)?;
    Ok(ZoneSample { length: z.ground_length, count: count_inside(&l, &z) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::HeightSpec;

    fn exp1() -> HeightModel {
        HeightModel::exponential(1.0).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let m = exp1();
        let w = Strictness::Weak;
        assert_eq!(zone_length_cdf(1.0, &m, 2.0, 1.0, 0.0, w), 0.0);
        assert_eq!(zone_length_cdf(1.0, &m, 2.0, 1.0, 2.5, w), 1.0);
        assert_eq!(zone_length_cdf(1.0, &m, 2.0, 1.0, 2.0, w), 1.0);
        let want = 1.0 - (-((-1f64).exp() - (-2f64).exp())).exp();
        assert!((zone_length_cdf(1.0, &m, 2.0, 1.0, 1.0, w) - want).abs() < 1e-14);
        assert!((want - 0.2075).abs() < 1e-4);
        // Left limit at the apex bound stays below 1.
        assert!(zone_length_cdf_left(1.0, &m, 2.0, 1.0, 2.0, w) < 1.0);
    }

    #[test]
    fn cdf_is_a_valid_distribution_function() {
        let m = HeightModel::weibull(1.7, 0.8).unwrap();
        let mut prev = 0.0;
        for i in 0..=400 {
            let t = i as f64 * 0.01;
            let c = zone_length_cdf(1.3, &m, 1.5, 0.5, t, Strictness::Weak);
            assert!(c >= prev && (0.0..=1.0).contains(&c));
            prev = c;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn level_slope_conventions() {
        let m = exp1();
        let v = zone_length_cdf(2.0, &m, 1.0, 0.0, 0.5, Strictness::Weak);
        assert!((v - (1.0 - (-2.0 * 0.5 * (-1f64).exp()).exp())).abs() < 1e-14);
        let a = HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap();
        assert_eq!(expected_zone_length_given_angle(1.0, &a, 1.0, 0.0, Strictness::Weak), f64::INFINITY);
        assert!((expected_zone_length_given_angle(1.0, &a, 1.0, 0.0, Strictness::Strict) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn expectations() {
        let m = exp1();
        let e = expected_zone_length_given_angle(1.0, &m, 2.0, 1.0, Strictness::Weak);
        assert!(e > 0.0 && e <= 2.0);
        assert!(expected_zone_length_given_angle(1.0, &m, 2.0, 1e12, Strictness::Weak) < 1e-11);
        assert_eq!(expected_building_count(1.0, &m, 0.0, 1.0), 0.0);
        assert!(expected_building_count(1.0, &m, 2.0, 1.0) >= 0.0);
        let p = expected_zone_length_palm(1.0, &m, 1.0, Scheme::Infinite);
        assert!((p - 1f64.sinh()).abs() < 1e-10);
        assert!((p - 1.1752).abs() < 1e-4);
        let a = HeightModel::atom_mixture(HeightSpec::Uniform { sup: 1.0 }, 1.0, 0.2).unwrap();
        assert_eq!(expected_zone_length_palm(1.0, &a, 1.0, Scheme::NextMax), f64::INFINITY);
        assert_eq!(expected_zone_length_palm(1.0, &a, 1.0, Scheme::SelfAbsorbing), 5.0);
    }

    #[test]
    fn sampled_zones_match_the_closed_forms() {
        use crate::validation::{par_map, McReport};
        let m = exp1();
        let prof = IntensityProfile::Constant(1.0);
        let tr = Truncation::default();
        let zs = par_map(20_000, 3, None, |_, s| {
            sample_zone_given_angle(&prof, &m, 2.0, 1.0, Strictness::Weak, s.clone(), &tr).unwrap()
        });
        let len: Vec<f64> = zs.iter().map(|z| z.length).collect();
        let cnt: Vec<f64> = zs.iter().map(|z| z.count as f64).collect();
        let e = expected_zone_length_given_angle(1.0, &m, 2.0, 1.0, Strictness::Weak);
        assert!(McReport::mean("l", &len, 3, 0.0).unwrap().sigmas_from(e) < 4.0);
        let c = expected_building_count(1.0, &m, 2.0, 1.0);
        assert!(McReport::mean("n", &cnt, 3, 0.0).unwrap().sigmas_from(c) < 4.0);
        let pal: Vec<f64> = par_map(20_000, 4, None, |_, s| {
            sample_zone_palm(&prof, &m, 1.0, Scheme::Infinite, s.clone(), &tr).unwrap().length
        });
        assert!(McReport::mean("p", &pal, 4, 0.0).unwrap().sigmas_from(1f64.sinh()) < 4.0);
    }
}
