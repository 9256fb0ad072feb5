//! Trip records on disk, plausibility filtering, GPS endpoint matching,
//! and synthetic trip generation.
//!
//! The file format is line oriented and UTF-8: `#`-prefixed manifest
//! lines first, then one record per line as comma-separated `key=value`
//! fields (`o=3,d=7,t=12.5,path=3;5;7,w=2`). Absent fields are omitted,
//! as is a unit weight. Saving a loaded canonical file reproduces it
//! byte for byte.

use std::collections::BTreeSet;
use std::io::{BufRead, Write as IoWrite};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::choice::ChoiceParams;
use crate::mixture::{Model, Observation, OdDistributions, TimeDensity};
use crate::network::{project_turns, shortest_path, Network, NodeId, N_FEATURES};
use crate::parallel::indexed_map;
use crate::{Error, Result};

/// Default snap radius for matching trip endpoints to nodes, meters.
pub const MATCH_RADIUS_M: f64 = 100.0;
/// Shortest plausible trip, minutes.
pub const MIN_TRIP_MINUTES: f64 = 0.5;
/// Longest plausible trip, minutes.
pub const MAX_TRIP_MINUTES: f64 = 180.0;
/// Slowest plausible door-to-door speed, meters per second.
pub const MIN_TRIP_SPEED: f64 = 1.0;

/// Observations plus the free-form provenance manifest that travelled
/// with them. Manifest lines are stored without the leading `# `.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub observations: Vec<Observation>,
    pub manifest: Vec<String>,
}

impl ObservationSet {
    pub fn new(observations: Vec<Observation>) -> Self {
        Self {
            observations,
            manifest: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Empirical OD frequencies of this data.
    pub fn od(&self) -> OdDistributions {
        OdDistributions::from_observations(&self.observations)
    }

    pub fn save<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        for line in &self.manifest {
            writeln!(w, "# {line}")?;
        }
        for obs in &self.observations {
            let mut fields = vec![format!("o={}", obs.o)];
            if let Some(d) = obs.d {
                fields.push(format!("d={d}"));
            }
            if let Some(t) = obs.t {
                fields.push(format!("t={t}"));
            }
            if let Some(path) = &obs.path {
                let joined: Vec<String> = path.iter().map(|v| v.to_string()).collect();
                fields.push(format!("path={}", joined.join(";")));
            }
            if obs.weight != 1.0 {
                fields.push(format!("w={}", obs.weight));
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut observations = Vec::new();
        let mut manifest = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                manifest.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
                continue;
            }
            observations.push(parse_record(trimmed, lineno)?);
        }
        Ok(Self {
            observations,
            manifest,
        })
    }
}

fn parse_record(line: &str, lineno: usize) -> Result<Observation> {
    let fail = |msg: String| Error::Parse { line: lineno, msg };
    let mut o = None;
    let mut d = None;
    let mut t = None;
    let mut path: Option<Vec<NodeId>> = None;
    let mut w = None;
    for field in line.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| fail(format!("field '{field}' is not key=value")))?;
        let dup = |name: &str| fail(format!("duplicate field '{name}'"));
        match key {
            "o" => {
                if o.replace(parse_node(value, lineno)?).is_some() {
                    return Err(dup("o"));
                }
            }
            "d" => {
                if d.replace(parse_node(value, lineno)?).is_some() {
                    return Err(dup("d"));
                }
            }
            "t" => {
                if t.replace(parse_float(value, lineno)?).is_some() {
                    return Err(dup("t"));
                }
            }
            "w" => {
                if w.replace(parse_float(value, lineno)?).is_some() {
                    return Err(dup("w"));
                }
            }
            "path" => {
                let nodes: Vec<NodeId> = value
                    .split(';')
                    .map(|v| parse_node(v, lineno))
                    .collect::<Result<_>>()?;
                if path.replace(nodes).is_some() {
                    return Err(dup("path"));
                }
            }
            other => return Err(fail(format!("unknown field '{other}'"))),
        }
    }
    let obs = Observation {
        o: o.ok_or_else(|| fail("missing origin field 'o'".into()))?,
        d,
        t,
        path,
        weight: w.unwrap_or(1.0),
    };
    // Value-level checks; node ranges are checked against a network later.
    obs.validate(usize::MAX).map_err(|e| fail(e.to_string()))?;
    Ok(obs)
}

fn parse_node(value: &str, lineno: usize) -> Result<NodeId> {
    value.parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("'{value}' is not a node id"),
    })
}

fn parse_float(value: &str, lineno: usize) -> Result<f64> {
    value.parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("'{value}' is not a number"),
    })
}

/// Nearest node within `radius` meters of (x, y), lowest id on ties;
/// None when nothing is close enough.
pub fn match_endpoint(net: &Network, x: f64, y: f64, radius: f64) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for (id, node) in net.nodes().iter().enumerate() {
        let d2 = (node.x - x).powi(2) + (node.y - y).powi(2);
        if d2 <= radius * radius && best.map_or(true, |(b, _)| d2 < b) {
            best = Some((d2, id));
        }
    }
    best.map(|(_, id)| id)
}

/// [`match_endpoint`] over a coordinate list.
pub fn match_endpoints(
    net: &Network,
    coords: &[(f64, f64)],
    radius: f64,
) -> Vec<Option<NodeId>> {
    coords
        .iter()
        .map(|&(x, y)| match_endpoint(net, x, y, radius))
        .collect()
}

/// Drops implausible trips: times outside [0.5, 180] minutes,
/// zero-length OD pairs, unreachable OD pairs, and implied door-to-door
/// speeds outside [1 m/s, the network's top speed] along the reference
/// shortest path. Idempotent; the manifest gains a line with the counts.
pub fn filter_trips(
    set: &ObservationSet,
    net: &Network,
    t_reference: &[f64],
) -> Result<ObservationSet> {
    if t_reference.len() != net.n_arcs() {
        return Err(Error::InvalidInput(format!(
            "reference times cover {} arcs, network has {}",
            t_reference.len(),
            net.n_arcs()
        )));
    }
    let mut kept = Vec::with_capacity(set.observations.len());
    for obs in &set.observations {
        if keep_trip(obs, net, t_reference)? {
            kept.push(obs.clone());
        }
    }
    let mut manifest = set.manifest.clone();
    manifest.push(format!(
        "filter kept={} dropped={}",
        kept.len(),
        set.observations.len() - kept.len()
    ));
    Ok(ObservationSet {
        observations: kept,
        manifest,
    })
}

fn keep_trip(obs: &Observation, net: &Network, t_reference: &[f64]) -> Result<bool> {
    if let Some(t) = obs.t {
        if !(MIN_TRIP_MINUTES..=MAX_TRIP_MINUTES).contains(&t) {
            return Ok(false);
        }
    }
    if let Some(d) = obs.effective_dest() {
        if d == obs.o {
            return Ok(false);
        }
        let (path, _) = match shortest_path(net, t_reference, obs.o, d) {
            Ok(found) => found,
            Err(Error::Unreachable { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        if let Some(t) = obs.t {
            let meters: f64 = path.iter().map(|&a| net.arc(a).length_m).sum();
            let speed = meters / (t * 60.0);
            if speed < MIN_TRIP_SPEED || speed > net.max_speed() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Ground-truth configuration for synthetic trips.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub b_true: [f64; N_FEATURES],
    /// Trips drawn for each ordered OD pair.
    pub trips_per_od: usize,
    /// When set, OD pairs are drawn uniformly with replacement instead
    /// of exhaustively, and the output is truncated to this many trips.
    pub total_trips: Option<usize>,
    /// Mean of the underlying normal in the log-normal time multiplier.
    pub noise_mu: f64,
    /// Scale of the underlying normal; zero makes times exact.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            b_true: [-2.0, -2.0, 0.0, -2.0, -5.0],
            trips_per_od: 5,
            total_trips: None,
            noise_mu: 0.1,
            noise_sigma: 0.1f64.sqrt(),
            seed: 7,
        }
    }
}

impl SimulationSpec {
    fn validate(&self) -> Result<()> {
        if self.trips_per_od == 0 {
            return Err(Error::InvalidInput("trips_per_od must be positive".into()));
        }
        if self.total_trips == Some(0) {
            return Err(Error::InvalidInput("total_trips must be positive".into()));
        }
        if !self.noise_mu.is_finite() || !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise ({}, {}) must be finite with nonnegative scale",
                self.noise_mu, self.noise_sigma
            )));
        }
        if self.b_true.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("taste weights must be finite".into()));
        }
        Ok(())
    }
}

/// Draws trips from the ground-truth model: a sampled route per trip and
/// an observed time equal to the route's model time scaled by a
/// log-normal multiplier. Unreachable OD pairs are skipped and counted.
/// Fully deterministic in the seed, independent of thread count.
pub fn simulate_trips(
    net: &Network,
    t_true: &[f64],
    spec: &SimulationSpec,
) -> Result<ObservationSet> {
    spec.validate()?;
    if net.n_nodes() < 2 {
        return Err(Error::InvalidInput("need at least two nodes".into()));
    }
    if t_true.len() != net.n_arcs() {
        return Err(Error::InvalidInput(format!(
            "true times cover {} arcs, network has {}",
            t_true.len(),
            net.n_arcs()
        )));
    }
    let n = net.n_nodes();
    // (o, d, trips to draw) per pair; slot order fixes the seed stream.
    let pairs: Vec<(NodeId, NodeId, usize)> = match spec.total_trips {
        None => {
            let mut pairs = Vec::with_capacity(n * (n - 1));
            for o in 0..n {
                for d in 0..n {
                    if o != d {
                        pairs.push((o, d, spec.trips_per_od));
                    }
                }
            }
            pairs
        }
        Some(total) => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(u64::MAX);
            let groups = (total + spec.trips_per_od - 1) / spec.trips_per_od;
            let mut pairs = Vec::with_capacity(groups);
            let mut left = total;
            for _ in 0..groups {
                let o = rng.gen_range(0..n);
                let d0 = rng.gen_range(0..n - 1);
                let d = if d0 >= o { d0 + 1 } else { d0 };
                let count = left.min(spec.trips_per_od);
                pairs.push((o, d, count));
                left -= count;
            }
            pairs
        }
    };
    let dests: Vec<NodeId> = pairs
        .iter()
        .map(|&(_, d, _)| d)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let graph = project_turns(net);
    let model = Model::build(
        &graph,
        t_true.to_vec(),
        ChoiceParams::new(spec.b_true),
        TimeDensity::Point,
        &dests,
    )?;
    let drawn = indexed_map(&pairs, |i, &(o, d, count)| -> Result<Vec<Observation>> {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let route = match model.sample_route(o, d, &mut rng) {
                Ok(route) => route,
                Err(Error::Unreachable { .. }) => return Ok(Vec::new()),
                Err(e) => {
                    return Err(Error::Observation {
                        index: i,
                        msg: format!("simulating o={o}, d={d}: {e}"),
                    })
                }
            };
            let theta = model.path_time(&route);
            let z: f64 = rng.sample(StandardNormal);
            let t = theta * (spec.noise_mu + spec.noise_sigma * z).exp();
            let mut nodes = Vec::with_capacity(route.len() + 1);
            nodes.push(o);
            for &a in &route {
                nodes.push(graph.arc_head(a));
            }
            out.push(Observation::full(o, d, t, nodes));
        }
        Ok(out)
    });
    let mut observations = Vec::new();
    let mut skipped = 0usize;
    for (result, &(_, _, count)) in drawn.into_iter().zip(&pairs) {
        let batch = result?;
        if batch.is_empty() && count > 0 {
            skipped += 1;
        }
        observations.extend(batch);
    }
    if observations.is_empty() {
        return Err(Error::InvalidInput(
            "no OD pair in the request is reachable".into(),
        ));
    }
    let mut manifest = vec![
        "format=trips-v1".to_string(),
        format!("seed={}", spec.seed),
        format!("noise_mu={}", spec.noise_mu),
        format!("noise_sigma={}", spec.noise_sigma),
        format!(
            "b_true={}",
            spec.b_true
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
        format!("trips_per_od={}", spec.trips_per_od),
        format!("trips={}", observations.len()),
    ];
    if skipped > 0 {
        manifest.push(format!("skipped_unreachable_pairs={skipped}"));
    }
    Ok(ObservationSet {
        observations,
        manifest,
    })
}

/// Forgets routes, keeping OD pairs and times.
pub fn strip_paths(set: &ObservationSet) -> ObservationSet {
    let observations = set
        .observations
        .iter()
        .map(|obs| Observation {
            d: obs.effective_dest(),
            path: None,
            ..obs.clone()
        })
        .collect();
    let mut manifest = set.manifest.clone();
    manifest.push("stripped=paths".to_string());
    ObservationSet {
        observations,
        manifest,
    }
}

/// Forgets observed times, keeping OD pairs and routes.
pub fn strip_times(set: &ObservationSet) -> ObservationSet {
    let observations = set
        .observations
        .iter()
        .map(|obs| Observation {
            t: None,
            ..obs.clone()
        })
        .collect();
    let mut manifest = set.manifest.clone();
    manifest.push("stripped=times".to_string());
    ObservationSet {
        observations,
        manifest,
    }
}

/// Splits into disjoint parts with sizes by largest remainder, after a
/// seeded shuffle. Fractions must be nonnegative and sum to one. Each
/// part keeps its records in the original relative order; the parts'
/// union is the input multiset.
pub fn split(set: &ObservationSet, fractions: &[f64], seed: u64) -> Result<Vec<ObservationSet>> {
    if fractions.is_empty() {
        return Err(Error::InvalidInput("need at least one fraction".into()));
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::InvalidInput(format!(
            "fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "fractions sum to {total}, expected 1"
        )));
    }
    let n = set.observations.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|f| (f * n as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut by_remainder: Vec<(f64, usize)> = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| (f * n as f64 - counts[i] as f64, i))
        .collect();
    by_remainder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for j in 0..n - assigned {
        counts[by_remainder[j % by_remainder.len()].1] += 1;
    }
    let mut parts = Vec::with_capacity(fractions.len());
    let mut cursor = 0usize;
    for (i, &count) in counts.iter().enumerate() {
        let mut idx: Vec<usize> = order[cursor..cursor + count].to_vec();
        cursor += count;
        idx.sort_unstable();
        let observations = idx
            .into_iter()
            .map(|j| set.observations[j].clone())
            .collect();
        let mut manifest = set.manifest.clone();
        manifest.push(format!(
            "split part={}/{} fractions={fractions:?} seed={seed}",
            i + 1,
            fractions.len()
        ));
        parts.push(ObservationSet {
            observations,
            manifest,
        });
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::test_nets::*;
    use crate::network::synthetic_grid;

    fn sample_set() -> ObservationSet {
        ObservationSet {
            observations: vec![
                Observation::full(3, 7, 12.5, vec![3, 5, 7]).with_weight(2.0),
                Observation::no_path(0, 4, 6.25),
                Observation::no_time(1, 2, vec![1, 2]),
                Observation {
                    o: 5,
                    d: None,
                    t: Some(4.2),
                    path: None,
                    weight: 1.0,
                },
            ],
            manifest: vec!["format=trips-v1".to_string(), "seed=9".to_string()],
        }
    }

    #[test]
    fn save_load_round_trip_is_byte_exact() {
        let set = sample_set();
        let mut bytes = Vec::new();
        set.save(&mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("# format=trips-v1\n# seed=9\n"));
        assert!(text.contains("o=3,d=7,t=12.5,path=3;5;7,w=2\n"));
        let loaded = ObservationSet::load(&bytes[..]).unwrap();
        assert_eq!(loaded, set);
        let mut again = Vec::new();
        loaded.save(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn load_reports_bad_lines() {
        let cases = [
            ("# m\no=1,d=2,t=-1", 2, "positive"),
            ("o=1,q=3", 1, "unknown field 'q'"),
            ("o=1,o=2,t=1", 1, "duplicate"),
            ("d=2,t=1", 1, "missing origin"),
            ("hello", 1, "not key=value"),
            ("o=x,d=2", 1, "not a node id"),
            ("o=1,d=2,t=abc", 1, "not a number"),
            ("o=1", 1, "destination or a time"),
        ];
        for (text, line, needle) in cases {
            match ObservationSet::load(text.as_bytes()) {
                Err(Error::Parse { line: l, msg }) => {
                    assert_eq!(l, line, "line for {text:?}");
                    assert!(msg.contains(needle), "msg {msg:?} for {text:?}");
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn endpoint_matching_snaps_within_radius() {
        let (net, _) = synthetic_grid(2, 2, 600.0).unwrap();
        // Nodes at (0,0), (600,0), (0,600), (600,600).
        assert_eq!(match_endpoint(&net, 10.0, -5.0, MATCH_RADIUS_M), Some(0));
        assert_eq!(match_endpoint(&net, 590.0, 0.0, MATCH_RADIUS_M), Some(1));
        assert_eq!(match_endpoint(&net, 300.0, 0.0, MATCH_RADIUS_M), None);
        // Equidistant within a generous radius: lowest id wins.
        assert_eq!(match_endpoint(&net, 300.0, 0.0, 500.0), Some(0));
        assert_eq!(
            match_endpoints(&net, &[(0.0, 0.0), (1e6, 1e6)], MATCH_RADIUS_M),
            vec![Some(0), None]
        );
    }

    #[test]
    fn filter_drops_the_implausible() {
        let (net, t_ref) = synthetic_grid(3, 3, 600.0).unwrap();
        // Corner to corner is 2400 m on the reference path.
        let good = Observation::no_path(0, 8, 10.0);
        let too_short = Observation::no_path(0, 8, 0.4);
        let too_long = Observation::no_path(0, 8, 200.0);
        let self_loop = Observation::no_path(4, 4, 5.0);
        let too_slow = Observation::no_path(0, 8, 60.0);
        let too_fast = Observation::no_path(0, 8, 3.6);
        let set = ObservationSet::new(vec![
            good.clone(),
            too_short,
            too_long,
            self_loop,
            too_slow,
            too_fast,
        ]);
        let kept = filter_trips(&set, &net, &t_ref).unwrap();
        assert_eq!(kept.observations, vec![good]);
        assert!(kept.manifest.iter().any(|l| l == "filter kept=1 dropped=5"));
        let twice = filter_trips(&kept, &net, &t_ref).unwrap();
        assert_eq!(twice.observations, kept.observations);
    }

    #[test]
    fn filter_drops_unreachable_pairs() {
        let net = diamond();
        let t_ref = vec![1.0; net.n_arcs()];
        let set = ObservationSet::new(vec![
            Observation::no_path(3, 0, 5.0),
            Observation::no_path(0, 3, 5.0),
        ]);
        let kept = filter_trips(&set, &net, &t_ref).unwrap();
        assert_eq!(kept.observations.len(), 1);
        assert_eq!(kept.observations[0].effective_dest(), Some(3));
    }

    #[test]
    fn zero_noise_simulation_recovers_model_times() {
        let net = chain3();
        let t_true = vec![1.3, 1.7];
        let spec = SimulationSpec {
            trips_per_od: 2,
            noise_mu: 0.0,
            noise_sigma: 0.0,
            ..SimulationSpec::default()
        };
        let set = simulate_trips(&net, &t_true, &spec).unwrap();
        // Reachable ordered pairs: (0,1), (0,2), (1,2).
        assert_eq!(set.observations.len(), 6);
        assert!(set
            .manifest
            .iter()
            .any(|l| l == "skipped_unreachable_pairs=3"));
        for obs in &set.observations {
            let expect: f64 = match (obs.o, obs.effective_dest().unwrap()) {
                (0, 1) => 1.3,
                (0, 2) => 1.3 + 1.7,
                (1, 2) => 1.7,
                other => panic!("unexpected pair {other:?}"),
            };
            assert_eq!(obs.t.unwrap(), expect);
            assert_eq!(obs.path.as_ref().unwrap()[0], obs.o);
        }
    }

    #[test]
    fn simulation_is_byte_identical_across_reruns() {
        let (net, t_true) = synthetic_grid(3, 3, 600.0).unwrap();
        let spec = SimulationSpec {
            total_trips: Some(40),
            ..SimulationSpec::default()
        };
        let a = simulate_trips(&net, &t_true, &spec).unwrap();
        let b = simulate_trips(&net, &t_true, &spec).unwrap();
        assert_eq!(a.observations.len(), 40);
        let mut bytes_a = Vec::new();
        a.save(&mut bytes_a).unwrap();
        let mut bytes_b = Vec::new();
        b.save(&mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert!(a.manifest.iter().any(|l| l == "seed=7"));
    }

    #[test]
    fn route_shares_match_choice_probabilities() {
        let net = diamond();
        let t_true = vec![1.0, 2.0, 1.0, 2.0];
        let spec = SimulationSpec {
            trips_per_od: 10_000,
            noise_sigma: 0.0,
            noise_mu: 0.0,
            seed: 3,
            ..SimulationSpec::default()
        };
        let set = simulate_trips(&net, &t_true, &spec).unwrap();
        let graph = project_turns(&net);
        let model = Model::build(
            &graph,
            t_true.clone(),
            ChoiceParams::new(spec.b_true),
            TimeDensity::Point,
            &[3],
        )
        .unwrap();
        let p_upper = model.values().path_loglik(&[0, 2], 0, 3).unwrap().exp();
        let trips: Vec<&Observation> = set
            .observations
            .iter()
            .filter(|o| o.o == 0 && o.effective_dest() == Some(3))
            .collect();
        assert_eq!(trips.len(), 10_000);
        let upper = trips
            .iter()
            .filter(|o| o.path.as_ref().unwrap()[1] == 1)
            .count() as f64;
        let n = trips.len() as f64;
        let expect_upper = n * p_upper;
        let expect_lower = n * (1.0 - p_upper);
        let chi2 = (upper - expect_upper).powi(2) / expect_upper
            + ((n - upper) - expect_lower).powi(2) / expect_lower;
        assert!(chi2 < 10.83, "chi-square {chi2} with share {}", upper / n);
    }

    #[test]
    fn split_partitions_exactly() {
        let observations: Vec<Observation> = (0..10)
            .map(|i| Observation::no_path(i, i + 1, 1.0 + i as f64))
            .collect();
        let set = ObservationSet::new(observations.clone());
        let parts = split(&set, &[0.8, 0.1, 0.1], 5).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.observations.len()).collect();
        assert_eq!(sizes, vec![8, 1, 1]);
        let mut union: Vec<Observation> = parts
            .iter()
            .flat_map(|p| p.observations.iter().cloned())
            .collect();
        union.sort_by_key(|o| o.o);
        assert_eq!(union, observations);
        let again = split(&set, &[0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!(parts, again);
        assert!(split(&set, &[0.5, 0.4], 5).is_err());
        assert!(split(&set, &[1.2, -0.2], 5).is_err());
    }

    #[test]
    fn stripping_degrades_granularity() {
        let set = ObservationSet::new(vec![Observation::full(0, 2, 3.0, vec![0, 1, 2])]);
        let pathless = strip_paths(&set);
        assert_eq!(pathless.observations[0].path, None);
        assert_eq!(pathless.observations[0].d, Some(2));
        assert_eq!(pathless.observations[0].t, Some(3.0));
        let timeless = strip_times(&set);
        assert_eq!(timeless.observations[0].t, None);
        assert!(timeless.observations[0].path.is_some());
    }
}
