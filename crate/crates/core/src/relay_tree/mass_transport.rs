//! Mass-transport check on a Palm-rooted landscape: the mean number of
//! descendants of the root within `k` generations equals the mean number of
//! its ancestors within `k` generations.

use serde::{Deserialize, Serialize};

use super::forest::{stack_parents, Parent};
use super::relay_zone;
use crate::blockage::{blocking_building, Blocked, Scheme, Truncation};
use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::landscape::{Building, IntensityProfile, Landscape};
use crate::validation::{par_map, McReport};
use crate::Stream;

/// Both sides of the balance at one truncation level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassTransportLevel {
    pub k: usize,
    pub descendants: McReport,
    pub ancestors: McReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassTransportReport {
    pub scheme: Scheme,
    pub levels: Vec<MassTransportLevel>,
    /// Untruncated totals, reported under `τ1` where both are finite.
    pub totals: Option<(McReport, McReport)>,
    pub n_windows: u64,
    /// Fraction of windows dropped because a zone could not be bounded.
    pub censored_fraction: f64,
}

impl MassTransportReport {
    /// Whether every level (and the totals) has overlapping 95% intervals.
    pub fn balanced(&self) -> bool {
        self.levels.iter().all(|l| l.descendants.overlaps(&l.ancestors))
            && self.totals.as_ref().is_none_or(|(d, a)| d.overlaps(a))
    }
}

struct Sample {
    desc: Vec<usize>,
    anc: Vec<usize>,
    total_desc: usize,
    total_anc: usize,
}

/// Generation of each node below the last one (the root), `None` when its
/// chain leaves the slice or is absorbed first.
fn depths_to_root(nodes: &[Building], sup: f64, scheme: Scheme) -> Vec<Option<usize>> {
    let parent = stack_parents(nodes, sup, scheme);
    let root = nodes.len() - 1;
    let mut depth = vec![None; nodes.len()];
    depth[root] = Some(0);
    for i in (0..root).rev() {
        if let Parent::Node(p) = parent[i] {
            depth[i] = depth[p].map(|d| d + 1);
        }
    }
    depth
}

fn one_window(
    profile: &IntensityProfile,
    heights: &HeightModel,
    scheme: Scheme,
    kmax: usize,
    mut stream: Stream,
    tr: &Truncation,
) -> Result<Sample> {
    let root_h = heights.sample(&mut stream);
    let mut l = Landscape::lazy(profile, heights, 0.0, stream);
    let root = Building::new(0.0, root_h);
    l.palm_add(root)?;
    // Right of the root only taller buildings matter.
    l.raise_floor(root_h);
    let sup = heights.sup_support();

    // Ancestors: follow the blockage chain.
    let mut anc_steps = 0usize;
    let mut cur = root.top();
    let limit = if scheme == Scheme::SelfAbsorbing { usize::MAX } else { kmax };
    while anc_steps < limit {
        match blocking_building(&mut l, cur, scheme, tr)? {
            Blocked::AbsorbedSelf => break,
            Blocked::Building(b) => {
                anc_steps += 1;
                cur = b.top();
                l.raise_floor(cur.y);
            }
        }
    }

    // Descendants: everything in the zone of the root.
    let left = if scheme == Scheme::NextMax && root_h >= sup {
        kth_max_to_left(&mut l, sup, kmax, tr)?
    } else {
        let z = relay_zone(&mut l, root, scheme, tr)?;
        if z.ground_left == f64::NEG_INFINITY {
            return Err(Error::TruncationBudgetExceeded(f64::INFINITY));
        }
        z.ground_left
    };
    let bs = l.buildings();
    let lo = bs.partition_point(|b| b.x <= left);
    let hi = l.find(0.0).expect("root was inserted");
    // The k-th maximal building of a τ2 root sits exactly at `left`.
    let lo = if scheme == Scheme::NextMax && root_h >= sup && lo > 0 && bs[lo - 1].x == left { lo - 1 } else { lo };
    let depth = depths_to_root(&bs[lo..=hi], sup, scheme);
    let total_desc = depth.iter().filter(|d| matches!(d, Some(k) if *k > 0)).count();
    let desc = (1..=kmax).map(|k| depth.iter().filter(|d| matches!(d, Some(j) if *j > 0 && *j <= k)).count()).collect();
    let anc = (1..=kmax).map(|k| anc_steps.min(k)).collect();
    Ok(Sample { desc, anc, total_desc, total_anc: anc_steps })
}

/// Base of the `k`-th maximal building strictly left of the origin.
fn kth_max_to_left(l: &mut Landscape, sup: f64, k: usize, tr: &Truncation) -> Result<f64> {
    let lam = l.profile().max_rate();
    let max_width = tr.budget / (lam * l.heights().atom_at_sup());
    let mut chunk = 16.0 / lam;
    loop {
        let hi = l.first_at_or_after(0.0);
        let found: Vec<f64> = l.buildings()[..hi].iter().rev().filter(|b| b.h >= sup).take(k).map(|b| b.x).collect();
        if found.len() == k {
            return Ok(found[k - 1]);
        }
        let (a, _) = l.covered();
        if -a > max_width {
            return Err(Error::TruncationBudgetExceeded(max_width));
        }
        l.extend_left(chunk)?;
        chunk *= 2.0;
    }
}

/// Runs `n_windows` Palm-rooted windows and compares descendants with
/// ancestors at truncation levels `1..=kmax`.
#[allow(clippy::too_many_arguments)]
pub fn mass_transport_check(
    profile: &IntensityProfile,
    heights: &HeightModel,
    scheme: Scheme,
    kmax: usize,
    n_windows: u64,
    seed: u64,
    threads: Option<usize>,
    tr: &Truncation,
) -> Result<MassTransportReport> {
    if scheme == Scheme::Infinite && heights.is_max_height_case() {
        return Err(Error::SchemeMismatch("scheme tau is ill-defined when the height law has an atom at its supremum"));
    }
    let kmax = kmax.max(1);
    let runs =
        par_map(n_windows, seed, threads, |_, stream| one_window(profile, heights, scheme, kmax, stream.clone(), tr));
    let mut ok = Vec::with_capacity(runs.len());
    let mut censored = 0usize;
    for r in runs {
        match r {
            Ok(s) => ok.push(s),
            Err(Error::TruncationBudgetExceeded(_)) => censored += 1,
            Err(e) => return Err(e),
        }
    }
    let cens = censored as f64 / n_windows.max(1) as f64;
    let col = |f: &dyn Fn(&Sample) -> usize| ok.iter().map(|s| f(s) as f64).collect::<Vec<f64>>();
    let mut levels = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        levels.push(MassTransportLevel {
            k,
            descendants: McReport::mean(&format!("descendants_k{k}"), &col(&|s| s.desc[k - 1]), seed, cens)?,
            ancestors: McReport::mean(&format!("ancestors_k{k}"), &col(&|s| s.anc[k - 1]), seed, cens)?,
        });
    }
    let totals = if scheme == Scheme::SelfAbsorbing {
        Some((
            McReport::mean("descendants_total", &col(&|s| s.total_desc), seed, cens)?,
            McReport::mean("ancestors_total", &col(&|s| s.total_anc), seed, cens)?,
        ))
    } else {
        None
    };
    Ok(MassTransportReport { scheme, levels, totals, n_windows, censored_fraction: cens })
}
