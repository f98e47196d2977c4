//! Finite-range relaying: a horizontal range `R`, where the chain of
//! `(hop length, slope, height)` stays Markov and can die, and a general
//! convex range, where tall buildings outside the range can still cut the
//! line of sight.

pub mod general;
pub mod horizontal;

pub use general::{blocking_building_gr, density_gr, prob_none_gr, stoppage_point, RangeSpec, Stoppage, StoppageLaw};
pub use horizontal::{
    blocking_building_hr, cemetery_mass, density_gnr, direct_zone_length_sample, expected_zone_area_hr,
    expected_zone_length_hr, finite_shade_contains, hitting_time_sample, hop_density, kernel_vis_r, trajectory_hr,
    zone_length_via_hitting_time, AreaReport, FiniteState, HrBlocked, ZoneLengthReport,
};
