//! Run configuration and the named Monte Carlo experiments behind it.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::blockage::{trajectory, Scheme, Truncation};
use crate::error::{Error, Result};
use crate::finite_range::{expected_zone_length_hr, stoppage_point, zone_length_via_hitting_time, RangeSpec};
use crate::heights::{HeightModel, HeightSpec};
use crate::landscape::{IntensityProfile, Landscape};
use crate::relay_tree::{mass_transport_check, sample_zone_given_angle, sample_zone_palm, Strictness, ZoneSample};
use crate::validation::{par_map, McReport};
use crate::Point;

/// Names accepted in [`RunConfig::experiment`].
pub const EXPERIMENTS: [&str; 6] = ["trajectory", "zone", "mass_transport", "hitting_time", "finite_zone", "stoppage"];

/// Numerical tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub trunc_eps: f64,
    pub budget: f64,
    pub quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let t = Truncation::default();
        Tolerances { trunc_eps: t.trunc_eps, budget: t.budget, quad_tol: 1e-10 }
    }
}

impl Tolerances {
    pub fn truncation(&self) -> Truncation {
        Truncation { trunc_eps: self.trunc_eps, budget: self.budget }
    }
}

/// Range of a finite-range run.
#[derive(Debug, Clone, PartialEq)]
pub enum RangeChoice {
    /// Only buildings with `0 < a - x ≤ R` are considered.
    Horizontal(f64),
    General(RangeSpec),
}

impl RangeChoice {
    /// `horizontal:R`, or any form accepted by [`RangeSpec::parse`].
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(r) = s.strip_prefix("horizontal:") {
            let r: f64 = r.trim().parse().map_err(|_| Error::Config(format!("bad range `{s}`")))?;
            if !(r > 0.0) {
                return Err(Error::Config(format!("range must be positive in `{s}`")));
            }
            return Ok(RangeChoice::Horizontal(r));
        }
        Ok(RangeChoice::General(RangeSpec::parse(s)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// A number `λ` or `{"breaks": [...], "rates": [...]}`.
    pub intensity: IntensityProfile,
    pub heights: HeightSpec,
    pub scheme: Scheme,
    /// `horizontal:R`, `disc:R`, `rect:W,H`, `diamond:R` or `profile:file.csv`.
    pub range: Option<String>,
    pub experiment: String,
    pub n_reps: u64,
    pub seed: u64,
    pub n_hops: usize,
    /// Height of the starting user.
    pub start_height: f64,
    /// Apex height for zone runs; drawn from the height law when absent.
    pub beta: Option<f64>,
    /// Prescribed blockage slope for zone runs; taken from the landscape when
    /// absent.
    pub tan_theta: Option<f64>,
    /// Truncation level of the mass-transport and foil checks.
    pub kmax: usize,
    pub window: f64,
    pub margin: f64,
    pub tolerances: Tolerances,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            intensity: IntensityProfile::Constant(1.0),
            heights: HeightSpec::Exponential { rate: 1.0 },
            scheme: Scheme::Infinite,
            range: None,
            experiment: "trajectory".into(),
            n_reps: 1000,
            seed: 1,
            n_hops: 10,
            start_height: 0.0,
            beta: None,
            tan_theta: None,
            kmax: 3,
            window: 200.0,
            margin: 30.0,
            tolerances: Tolerances::default(),
            output: None,
            report: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn height_model(&self) -> Result<HeightModel> {
        HeightModel::new(self.heights.clone())
    }

    pub fn range_choice(&self) -> Result<Option<RangeChoice>> {
        self.range.as_deref().map(RangeChoice::parse).transpose()
    }

    /// Rejects inconsistent or out-of-domain settings.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.intensity.validate()?;
        let m = self.height_model()?;
        if self.scheme == Scheme::Infinite && m.is_max_height_case() {
            return bad(
                "scheme tau is ill-defined for a height law with an atom at its supremum; use tau1 or tau2".into()
            );
        }
        self.range_choice()?;
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return bad(format!(
                "unknown experiment `{}` (expected one of {})",
                self.experiment,
                EXPERIMENTS.join(", ")
            ));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be positive".into());
        }
        if !(self.start_height.is_finite() && self.start_height >= 0.0) {
            return bad("start_height must be finite and nonnegative".into());
        }
        if self.beta.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
            return bad("beta must be finite and positive".into());
        }
        if self.tan_theta.is_some_and(|t| !(t >= 0.0)) {
            return bad("tan_theta must be nonnegative".into());
        }
        if !(self.window > 0.0 && self.margin >= 0.0 && 2.0 * self.margin < self.window) {
            return bad("need window > 2 margin >= 0".into());
        }
        let t = &self.tolerances;
        if !(t.trunc_eps > 0.0 && t.trunc_eps < 1.0 && t.budget > 0.0 && t.quad_tol > 0.0) {
            return bad("tolerances must be positive, trunc_eps below 1".into());
        }
        Ok(())
    }

    fn lambda(&self) -> Result<f64> {
        self.intensity
            .constant()
            .ok_or_else(|| Error::Config(format!("experiment `{}` needs a constant intensity", self.experiment)))
    }
}

fn split<T>(runs: Vec<Result<T>>) -> Result<(Vec<T>, f64)> {
    let n = runs.len().max(1);
    let mut ok = Vec::with_capacity(runs.len());
    for r in runs {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::TruncationBudgetExceeded(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let cens = (n - ok.len()) as f64 / n as f64;
    if ok.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok((ok, cens))
}

/// Runs the experiment named in `config`. Results depend on the config only;
/// `threads` caps the workers.
pub fn run_experiment(config: &RunConfig, threads: Option<usize>) -> Result<Vec<McReport>> {
    config.validate()?;
    let m = config.height_model()?;
    let prof = &config.intensity;
    let tr = config.tolerances.truncation();
    let (n, seed) = (config.n_reps, config.seed);
    match config.experiment.as_str() {
        "trajectory" => {
            let start = Point::new(0.0, config.start_height);
            let runs = par_map(n, seed, threads, |_, s| {
                trajectory(prof, &m, start, config.n_hops, config.scheme, s.clone(), &tr)
                    .map(|st| *st.last().expect("nonempty"))
            });
            let (last, cens) = split(runs)?;
            let col = |f: &dyn Fn(&crate::blockage::BlockState) -> f64| last.iter().map(f).collect::<Vec<f64>>();
            Ok(vec![
                McReport::mean("final_x", &col(&|s| s.x), seed, cens)?,
                McReport::mean("final_height", &col(&|s| s.h), seed, cens)?,
            ])
        }
        "zone" => {
            let runs = par_map(n, seed, threads, |_, s| -> Result<ZoneSample> {
                let beta = match config.beta {
                    Some(b) => b,
                    None => m.sample(s),
                };
                match config.tan_theta {
                    Some(t) => {
                        sample_zone_given_angle(prof, &m, beta, t, Strictness::of(config.scheme), s.clone(), &tr)
                    }
                    None => sample_zone_palm(prof, &m, beta, config.scheme, s.clone(), &tr),
                }
            });
            let (z, cens) = split(runs)?;
            let len: Vec<f64> = z.iter().map(|z| z.length).collect();
            let cnt: Vec<f64> = z.iter().map(|z| z.count as f64).collect();
            Ok(vec![
                McReport::mean("zone_length", &len, seed, cens)?,
                McReport::mean("zone_building_count", &cnt, seed, cens)?,
            ])
        }
        "mass_transport" => {
            let r = mass_transport_check(prof, &m, config.scheme, config.kmax, n, seed, threads, &tr)?;
            let mut out = Vec::new();
            for l in r.levels {
                out.push(l.descendants);
                out.push(l.ancestors);
            }
            if let Some((d, a)) = r.totals {
                out.push(d);
                out.push(a);
            }
            Ok(out)
        }
        "hitting_time" | "finite_zone" => {
            let Some(RangeChoice::Horizontal(r)) = config.range_choice()? else {
                return Err(Error::Config(format!("experiment `{}` needs range horizontal:R", config.experiment)));
            };
            config.lambda()?;
            if config.experiment == "hitting_time" {
                Ok(vec![zone_length_via_hitting_time(prof, &m, r, config.start_height, n, seed, threads)?])
            } else {
                let z = expected_zone_length_hr(prof, &m, r, n, seed, threads, None)?;
                Ok(vec![z.via_hitting_time, z.direct])
            }
        }
        "stoppage" => {
            let Some(RangeChoice::General(range)) = config.range_choice()? else {
                return Err(Error::Config("experiment `stoppage` needs a general range such as disc:R".into()));
            };
            let o = Point::new(0.0, config.start_height);
            let runs = par_map(n, seed, threads, |_, s| {
                let mut l = Landscape::lazy(prof, &m, 0.0, s.clone());
                stoppage_point(&mut l, o, &range)
            });
            let (st, cens) = split(runs)?;
            let xs: Vec<f64> = st.iter().map(|s| s.x).collect();
            let capped = st.iter().filter(|s| s.height.is_none()).count();
            Ok(vec![
                McReport::mean("stoppage_x", &xs, seed, cens)?,
                McReport::proportion("stoppage_at_cap", capped, st.len(), seed, cens)?,
            ])
        }
        other => Err(Error::Config(format!("unknown experiment `{other}`"))),
    }
}
