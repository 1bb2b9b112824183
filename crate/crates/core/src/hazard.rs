//! Disaster scenarios and direct component failures.
//!
//! A component fails with probability
//!
//! ```text
//! P(failure) = P(hazard) · P(exposure | hazard) · P(failure | exposure)
//! ```
//!
//! Exposure decays linearly with distance from the event: `g(u) = max(0, 1 - u)`
//! where `u` is the distance to the epicentre over the radius (point events)
//! or the distance to the track over the offset (track events). Failures are
//! drawn from a ChaCha8 stream seeded by the scenario seed, so a seed fully
//! determines the scenario.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Component, ComponentKind, IntegratedNetwork, Point};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Default event time, s.
pub const DEFAULT_OCCURRENCE_TIME: f64 = 3600.0;

/// Relative occurrence weights of low, moderate and high floods.
pub const FLOOD_INTENSITY_WEIGHTS: [(Intensity, f64); 3] =
    [(Intensity::Low, 0.1), (Intensity::Moderate, 0.3), (Intensity::High, 0.5)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Low,
    Moderate,
    High,
    Extreme,
    /// Resolved to one of the four concrete levels, uniformly, before sampling.
    Random,
}

impl Intensity {
    pub const CONCRETE: [Intensity; 4] = [Intensity::Low, Intensity::Moderate, Intensity::High, Intensity::Extreme];

    pub fn as_str(self) -> &'static str {
        match self {
            Intensity::Low => "low",
            Intensity::Moderate => "moderate",
            Intensity::High => "high",
            Intensity::Extreme => "extreme",
            Intensity::Random => "random",
        }
    }

    pub fn resolve<R: Rng + ?Sized>(self, rng: &mut R) -> Intensity {
        match self {
            Intensity::Random => Intensity::CONCRETE[rng.random_range(0..4)],
            level => level,
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Intensity::Low),
            "moderate" => Ok(Intensity::Moderate),
            "high" => Ok(Intensity::High),
            "extreme" => Ok(Intensity::Extreme),
            "random" => Ok(Intensity::Random),
            _ => Err(Error::InvalidInput(format!(
                "unknown intensity '{s}' (expected low, moderate, high, extreme or random)"
            ))),
        }
    }
}

/// `P(failure | exposure)` for a concrete intensity level.
///
/// ```
/// use lifeline::hazard::{conditional_failure_probability, Intensity};
/// assert_eq!(conditional_failure_probability(Intensity::High).unwrap(), 0.6);
/// assert!(conditional_failure_probability(Intensity::Random).is_err());
/// ```
pub fn conditional_failure_probability(intensity: Intensity) -> Result<f64> {
    match intensity {
        Intensity::Low => Ok(0.1),
        Intensity::Moderate => Ok(0.3),
        Intensity::High => Ok(0.6),
        Intensity::Extreme => Ok(0.9),
        Intensity::Random => Err(Error::InvalidInput(
            "random intensity must be resolved before it has a failure probability".into(),
        )),
    }
}

/// Draws an intensity from relative weights (normalised internally).
pub fn draw_intensity<R: Rng + ?Sized>(weights: &[(Intensity, f64)], rng: &mut R) -> Result<Intensity> {
    let dist = WeightedIndex::new(weights.iter().map(|w| w.1))
        .map_err(|e| Error::InvalidInput(format!("intensity weights: {e}")))?;
    Ok(weights[dist.sample(rng)].0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventShape {
    Point { center: Point, radius: f64 },
    /// Polyline footprint, e.g. a stream centreline or a storm track.
    Track { track: Vec<Point>, offset: f64 },
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEvent {
    #[serde(flatten)]
    pub shape: EventShape,
    pub intensity: Intensity,
    /// s
    pub occurrence_time: f64,
}

impl HazardEvent {
    pub fn point(center: Point, radius: f64, intensity: Intensity) -> Self {
        HazardEvent {
            shape: EventShape::Point { center, radius },
            intensity,
            occurrence_time: DEFAULT_OCCURRENCE_TIME,
        }
    }

    pub fn track(track: Vec<Point>, offset: f64, intensity: Intensity) -> Self {
        HazardEvent {
            shape: EventShape::Track { track, offset },
            intensity,
            occurrence_time: DEFAULT_OCCURRENCE_TIME,
        }
    }

    pub fn random(count: usize) -> Self {
        HazardEvent {
            shape: EventShape::Random { count },
            intensity: Intensity::Random,
            occurrence_time: DEFAULT_OCCURRENCE_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.occurrence_time >= 0.0 && self.occurrence_time.is_finite()) {
            return bad(format!("occurrence time must be finite and >= 0, got {}", self.occurrence_time));
        }
        match &self.shape {
            EventShape::Point { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                bad(format!("radius must be > 0, got {radius}"))
            }
            EventShape::Track { offset, .. } if !(*offset > 0.0 && offset.is_finite()) => {
                bad(format!("offset must be > 0, got {offset}"))
            }
            EventShape::Track { track, .. } if track.is_empty() => bad("track has no points".into()),
            EventShape::Random { count: 0 } => bad("random events need count >= 1".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Pipe stays open with an orifice leak.
    Leak,
    /// Component is out of service.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub component_id: String,
    /// s
    pub failure_time: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisasterScenario {
    pub schema_version: u32,
    pub seed: u64,
    pub event: HazardEvent,
    /// Intensity the failures were sampled with.
    pub resolved_intensity: Intensity,
    pub p_hazard: f64,
    pub failures: Vec<Failure>,
}

impl DisasterScenario {
    /// A scenario with hand-picked failures, all at `time`.
    pub fn from_failures(net: &IntegratedNetwork, ids: &[&str], time: f64) -> Result<Self> {
        let mut failures = Vec::new();
        for id in ids {
            let c = net.require(id)?;
            if !c.kind.is_repairable() {
                return Err(Error::InvalidInput(format!("{id} is a {} and cannot fail", c.kind.name())));
            }
            failures.push(Failure {
                component_id: id.to_string(),
                failure_time: time,
                severity: severity_of(c),
            });
        }
        Ok(DisasterScenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            seed: 0,
            event: HazardEvent {
                shape: EventShape::Random { count: ids.len().max(1) },
                intensity: Intensity::Extreme,
                occurrence_time: time,
            },
            resolved_intensity: Intensity::Extreme,
            p_hazard: 1.0,
            failures,
        })
    }

    pub fn failed_ids(&self) -> Vec<&str> {
        self.failures.iter().map(|f| f.component_id.as_str()).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| Error::Parse {
            what: format!("scenario {}", path.display()),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serialises");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn severity_of(c: &Component) -> Severity {
    match c.kind {
        ComponentKind::Pipe(_) => Severity::Leak,
        _ => Severity::Full,
    }
}

/// Components hazards can break: water pipes, power lines and road links.
pub fn is_eligible(c: &Component) -> bool {
    matches!(c.kind, ComponentKind::Pipe(_) | ComponentKind::Line(_) | ComponentKind::RoadLink(_))
}

fn decay(u: f64) -> f64 {
    (1.0 - u).max(0.0)
}

/// Distance from `p` to the segment `a`-`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Distance from `p` to the nearest point of a polyline.
pub fn polyline_distance(p: Point, line: &[Point]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => line
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// `P(exposure | hazard)` of a component at its recorded location. Random
/// events expose every component fully; selection happens in sampling.
pub fn exposure_probability(component: &Component, event: &HazardEvent) -> f64 {
    match &event.shape {
        EventShape::Point { center, radius } => decay(component.location.distance(*center) / radius),
        EventShape::Track { track, offset } => decay(polyline_distance(component.location, track) / offset),
        EventShape::Random { .. } => 1.0,
    }
}

/// `p_hazard · exposure · conditional`, each clamped to `[0, 1]`.
pub fn failure_probability(p_hazard: f64, exposure: f64, conditional: f64) -> f64 {
    p_hazard.clamp(0.0, 1.0) * exposure.clamp(0.0, 1.0) * conditional.clamp(0.0, 1.0)
}

/// Samples the direct failures of `event`.
///
/// Point and track events draw one Bernoulli per eligible component, in
/// network order; random events pick `count` eligible components without
/// replacement. A `random` intensity is resolved from the same stream first.
pub fn sample_scenario(net: &IntegratedNetwork, event: &HazardEvent, p_hazard: f64, seed: u64) -> Result<DisasterScenario> {
    event.validate()?;
    if !(0.0..=1.0).contains(&p_hazard) {
        return Err(Error::InvalidInput(format!("p_hazard must be in [0, 1], got {p_hazard}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intensity = event.intensity.resolve(&mut rng);
    let conditional = conditional_failure_probability(intensity)?;
    let eligible: Vec<&Component> = net.all_components().filter(|c| is_eligible(c)).collect();

    let chosen: Vec<&Component> = match event.shape {
        EventShape::Random { count } => {
            if count > eligible.len() {
                return Err(Error::InvalidInput(format!(
                    "cannot fail {count} components, only {} are eligible",
                    eligible.len()
                )));
            }
            let mut picks = rand::seq::index::sample(&mut rng, eligible.len(), count).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| eligible[i]).collect()
        }
        _ => eligible
            .into_iter()
            .filter(|c| {
                let p = failure_probability(p_hazard, exposure_probability(c, event), conditional);
                rng.random::<f64>() < p
            })
            .collect(),
    };

    Ok(DisasterScenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        seed,
        event: event.clone(),
        resolved_intensity: intensity,
        p_hazard,
        failures: chosen
            .into_iter()
            .map(|c| Failure {
                component_id: c.id.clone(),
                failure_time: event.occurrence_time,
                severity: severity_of(c),
            })
            .collect(),
    })
}

/// Axis-aligned region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    /// Bounding box of every component location in the network.
    pub fn of_network(net: &IntegratedNetwork) -> Self {
        let mut b = Bounds {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for c in net.all_components() {
            b.min.x = b.min.x.min(c.location.x);
            b.min.y = b.min.y.min(c.location.y);
            b.max.x = b.max.x.max(c.location.x);
            b.max.y = b.max.y.max(c.location.y);
        }
        b
    }

    /// Grows each side by `fraction` of the extent on that axis.
    pub fn inflate(&self, fraction: f64) -> Self {
        let (wx, wy) = ((self.max.x - self.min.x) * fraction, (self.max.y - self.min.y) * fraction);
        Bounds {
            min: Point::new(self.min.x - wx, self.min.y - wy),
            max: Point::new(self.max.x + wx, self.max.y + wy),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

/// Fraction of each axis extent that generated tracks may overshoot.
pub const TRACK_OVERSHOOT: f64 = 0.125;

const TRACK_MIN_SEGMENTS: usize = 50;

/// Random storm track crossing `bounds` from west to east.
///
/// Control points sit at evenly spaced x from `min.x` to `max.x` with
/// uniform random y; the track is the uniform Catmull-Rom spline through
/// them, sampled into at least 50 segments. The spline may leave `bounds`
/// by up to [`TRACK_OVERSHOOT`] of the extent.
pub fn generate_track(seed: u64, bounds: Bounds, n_control_points: usize) -> Result<Vec<Point>> {
    if n_control_points < 2 {
        return Err(Error::InvalidInput("a track needs at least 2 control points".into()));
    }
    let (w, h) = (bounds.max.x - bounds.min.x, bounds.max.y - bounds.min.y);
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(Error::InvalidInput(format!("degenerate track bounds {bounds:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_control_points;
    let mut ctrl = Vec::with_capacity(n + 2);
    for i in 0..n {
        let x = bounds.min.x + w * i as f64 / (n - 1) as f64;
        ctrl.push(Point::new(x, rng.random_range(bounds.min.y..=bounds.max.y)));
    }
    // phantom end points continue the first and last chords
    let reflect = |a: Point, b: Point| Point::new(2.0 * a.x - b.x, 2.0 * a.y - b.y);
    ctrl.insert(0, reflect(ctrl[0], ctrl[1]));
    ctrl.push(reflect(ctrl[n], ctrl[n - 1]));

    let per_span = TRACK_MIN_SEGMENTS.div_ceil(n - 1);
    let mut out = vec![ctrl[1]];
    for s in 1..n {
        let (p0, p1, p2, p3) = (ctrl[s - 1], ctrl[s], ctrl[s + 1], ctrl[s + 2]);
        for k in 1..=per_span {
            let t = k as f64 / per_span as f64;
            let (t2, t3) = (t * t, t * t * t);
            let blend = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
            };
            out.push(Point::new(blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_simple_testbed;

    fn at(x: f64, y: f64) -> Component {
        Component::new(
            "t_link_x",
            Point::new(x, y),
            ComponentKind::RoadLink(crate::network::RoadLink {
                from: "a".into(),
                to: "b".into(),
                free_flow_time: 1.0,
                capacity: 1.0,
            }),
        )
    }

    #[test]
    fn point_exposure() {
        let e = HazardEvent::point(Point::new(0.0, 0.0), 100.0, Intensity::Low);
        assert_eq!(exposure_probability(&at(0.0, 0.0), &e), 1.0);
        assert_eq!(exposure_probability(&at(100.0, 0.0), &e), 0.0);
        assert_eq!(exposure_probability(&at(0.0, 50.0), &e), 0.5);
        assert_eq!(exposure_probability(&at(300.0, 0.0), &e), 0.0);
    }

    #[test]
    fn track_exposure_uses_perpendicular_distance() {
        let e = HazardEvent::track(vec![Point::new(0.0, 0.0), Point::new(1000.0, 0.0)], 100.0, Intensity::Low);
        assert!((exposure_probability(&at(500.0, 25.0), &e) - 0.75).abs() < 1e-15);
        // beyond the end the nearest point is the end point
        assert!((exposure_probability(&at(1060.0, 80.0), &e) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn probabilities_multiply() {
        assert!((failure_probability(0.5, 0.8, 0.6) - 0.24).abs() < 1e-15);
        assert_eq!(failure_probability(0.7, 0.0, 0.9), 0.0);
        assert_eq!(failure_probability(1.0, 1.0, 1.0), 1.0);
        assert_eq!(conditional_failure_probability(Intensity::Low).unwrap(), 0.1);
        assert_eq!(conditional_failure_probability(Intensity::Extreme).unwrap(), 0.9);
    }

    #[test]
    fn zero_hazard_fails_nothing() {
        let net = build_simple_testbed();
        let e = HazardEvent::point(Point::new(1000.0, 1000.0), 5000.0, Intensity::Extreme);
        assert!(sample_scenario(&net, &e, 0.0, 1).unwrap().failures.is_empty());
    }

    #[test]
    fn random_event_fails_exact_count() {
        let net = build_simple_testbed();
        let s = sample_scenario(&net, &HazardEvent::random(3), 1.0, 9).unwrap();
        let mut ids = s.failed_ids();
        ids.dedup();
        assert_eq!(ids.len(), 3);
        assert_ne!(s.resolved_intensity, Intensity::Random);
        assert!(sample_scenario(&net, &HazardEvent::random(1000), 1.0, 9).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let net = build_simple_testbed();
        let e = HazardEvent::point(Point::new(1000.0, 1000.0), 1500.0, Intensity::Random);
        let a = sample_scenario(&net, &e, 1.0, 42).unwrap();
        assert_eq!(a, sample_scenario(&net, &e, 1.0, 42).unwrap());
        assert!(a.failures.iter().all(|f| f.failure_time == DEFAULT_OCCURRENCE_TIME));
        for f in &a.failures {
            let expect = if f.component_id.starts_with("w_") { Severity::Leak } else { Severity::Full };
            assert_eq!(f.severity, expect);
        }
    }

    #[test]
    fn invalid_events_are_rejected() {
        let net = build_simple_testbed();
        let e = HazardEvent::point(Point::new(0.0, 0.0), 0.0, Intensity::Low);
        assert!(sample_scenario(&net, &e, 1.0, 1).is_err());
        assert!(sample_scenario(&net, &HazardEvent::random(0), 1.0, 1).is_err());
        let e = HazardEvent::point(Point::new(0.0, 0.0), 10.0, Intensity::Low);
        assert!(sample_scenario(&net, &e, 1.5, 1).is_err());
    }

    #[test]
    fn two_control_points_give_a_chord() {
        let b = Bounds { min: Point::new(0.0, 0.0), max: Point::new(100.0, 100.0) };
        let t = generate_track(3, b, 2).unwrap();
        assert!(t.len() > 50);
        let (a, z) = (t[0], *t.last().unwrap());
        for p in &t {
            assert!(segment_distance(*p, a, z) < 1e-9);
        }
        assert_eq!(t, generate_track(3, b, 2).unwrap());
        assert!(generate_track(3, b, 1).is_err());
        assert!(generate_track(3, Bounds { min: b.min, max: b.min }, 4).is_err());
    }

    #[test]
    fn tracks_stay_within_overshoot_margin() {
        let b = Bounds { min: Point::new(-200.0, 0.0), max: Point::new(2200.0, 2000.0) };
        let allowed = b.inflate(TRACK_OVERSHOOT);
        for seed in 0..1000 {
            for n in [3, 5, 8] {
                let t = generate_track(seed, b, n).unwrap();
                assert!(t.len() > TRACK_MIN_SEGMENTS);
                assert!(t.iter().all(|p| allowed.contains(*p)), "seed {seed} n {n}");
            }
        }
    }

    #[test]
    fn flood_weights_are_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 90_000;
        let highs = (0..n)
            .filter(|_| draw_intensity(&FLOOD_INTENSITY_WEIGHTS, &mut rng).unwrap() == Intensity::High)
            .count();
        let expect = 0.5 / 0.9;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(((highs as f64 / n as f64) - expect).abs() < 4.0 * se);
    }

    #[test]
    fn scenario_file_round_trip() {
        let net = build_simple_testbed();
        let s = sample_scenario(&net, &HazardEvent::random(2), 1.0, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        s.save(&p).unwrap();
        assert_eq!(DisasterScenario::load(&p).unwrap(), s);
    }
}
