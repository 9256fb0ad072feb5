//! The generative trip mixture: an origin is drawn, then a destination
//! given the origin, then a route from the choice model, and finally an
//! observed time around the route's predicted time. Marginalizing the
//! pieces an observation lacks gives one consistent likelihood for every
//! granularity of data, so path records and aggregate time records mix in
//! a single objective without cross-type weights.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::choice::{
    self, compute_utilities, default_max_steps, enumerate_paths, ChoiceParams, ParamGrad,
    SolveDiagnostics, ValueSolution,
};
use crate::network::{build_features, ArcId, Features, NodeId, TurnGraph};
use crate::numeric::{integrate, integrate_positive, integrate_real, logsumexp};
use crate::parallel::indexed_map;
use crate::{Error, Result};

/// Sample count per observation used for the city-scale data.
pub const K_CITY: usize = 35;
/// Sample count per observation used for the synthetic grid.
pub const K_SYNTHETIC: usize = 100;
/// Rejected-walk retries before a sampling call gives up.
pub const WALK_ATTEMPTS: usize = 10;
/// Path-set size up to which exact enumeration replaces Monte Carlo.
pub const ENUMERATION_CAP: usize = 10_000;

const QUAD_TOL: f64 = 1e-9;

/// One trip record at any granularity. The origin is always known; the
/// other fields are optional. A stored path is a node sequence starting
/// at `o`, and when `d` is present the path must end there.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub o: NodeId,
    pub d: Option<NodeId>,
    /// Observed door-to-door time, minutes.
    pub t: Option<f64>,
    pub path: Option<Vec<NodeId>>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// o, d, path, t.
    Full,
    /// o, d, t; the route is marginalized.
    NoPath,
    /// o, d, path; the time is marginalized.
    NoTime,
    /// o, d only.
    OdOnly,
    /// o, t only; the destination and route are both marginalized.
    OriginTime,
}

impl Observation {
    pub fn full(o: NodeId, d: NodeId, t: f64, path: Vec<NodeId>) -> Self {
        Self {
            o,
            d: Some(d),
            t: Some(t),
            path: Some(path),
            weight: 1.0,
        }
    }

    pub fn no_path(o: NodeId, d: NodeId, t: f64) -> Self {
        Self {
            o,
            d: Some(d),
            t: Some(t),
            path: None,
            weight: 1.0,
        }
    }

    pub fn no_time(o: NodeId, d: NodeId, path: Vec<NodeId>) -> Self {
        Self {
            o,
            d: Some(d),
            t: None,
            path: Some(path),
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// The destination, explicit or implied by the path's endpoint.
    pub fn effective_dest(&self) -> Option<NodeId> {
        self.d.or_else(|| self.path.as_ref().and_then(|p| p.last().copied()))
    }

    pub fn granularity(&self) -> Granularity {
        match (self.effective_dest(), self.t.is_some(), self.path.is_some()) {
            (Some(_), true, true) => Granularity::Full,
            (Some(_), true, false) => Granularity::NoPath,
            (Some(_), false, true) => Granularity::NoTime,
            (Some(_), false, false) => Granularity::OdOnly,
            (None, _, _) => Granularity::OriginTime,
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.o >= n_nodes {
            return Err(Error::InvalidInput(format!("origin {} out of range", self.o)));
        }
        if let Some(d) = self.d {
            if d >= n_nodes {
                return Err(Error::InvalidInput(format!("destination {d} out of range")));
            }
        }
        if self.d.is_none() && self.t.is_none() && self.path.is_none() {
            return Err(Error::InvalidInput(
                "observation needs a destination or a time besides the origin".into(),
            ));
        }
        if let Some(t) = self.t {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "observed time must be positive, got {t}"
                )));
            }
        }
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return Err(Error::InvalidInput(format!(
                "observation weight must be positive, got {}",
                self.weight
            )));
        }
        if let Some(path) = &self.path {
            if path.len() < 2 {
                return Err(Error::InvalidInput(
                    "a path needs at least two nodes".into(),
                ));
            }
            if let Some(&bad) = path.iter().find(|&&v| v >= n_nodes) {
                return Err(Error::InvalidInput(format!(
                    "path visits nonexistent node {bad}"
                )));
            }
            if path[0] != self.o {
                return Err(Error::InvalidInput(format!(
                    "path starts at node {}, observation origin is {}",
                    path[0], self.o
                )));
            }
            if let Some(d) = self.d {
                if *path.last().unwrap() != d {
                    return Err(Error::InvalidInput(format!(
                        "path ends at node {}, observation destination is {d}",
                        path.last().unwrap()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Empirical origin and destination-given-origin frequencies. These are
/// constants of the mixture, never estimated: they contribute additive
/// constants to the log-likelihood in the model parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdDistributions {
    p_o: BTreeMap<NodeId, f64>,
    p_d: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
}

impl OdDistributions {
    /// Frequencies from weighted (o, d) pairs; `d` may be absent (such
    /// records inform the origin marginal only).
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, Option<NodeId>, f64)>,
    {
        let mut o_mass: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut d_mass: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
        for (o, d, w) in pairs {
            *o_mass.entry(o).or_insert(0.0) += w;
            if let Some(d) = d {
                *d_mass.entry(o).or_insert_with(BTreeMap::new).entry(d).or_insert(0.0) += w;
            }
        }
        let o_total: f64 = o_mass.values().sum();
        if o_total > 0.0 {
            for v in o_mass.values_mut() {
                *v /= o_total;
            }
        }
        for cond in d_mass.values_mut() {
            let total: f64 = cond.values().sum();
            for v in cond.values_mut() {
                *v /= total;
            }
        }
        Self { p_o: o_mass, p_d: d_mass }
    }

    pub fn from_observations(obs: &[Observation]) -> Self {
        Self::from_pairs(
            obs.iter()
                .map(|ob| (ob.o, ob.effective_dest(), ob.weight)),
        )
    }

    /// ln P(o); negative infinity for an origin never observed.
    pub fn ln_p_origin(&self, o: NodeId) -> f64 {
        self.p_o.get(&o).map_or(f64::NEG_INFINITY, |p| p.ln())
    }

    /// ln P(d | o); negative infinity for an unobserved pair.
    pub fn ln_p_dest(&self, o: NodeId, d: NodeId) -> f64 {
        self.p_d
            .get(&o)
            .and_then(|m| m.get(&d))
            .map_or(f64::NEG_INFINITY, |p| p.ln())
    }

    /// Destinations observed from `o` with their conditional weights.
    pub fn destinations(&self, o: NodeId) -> Vec<(NodeId, f64)> {
        self.p_d
            .get(&o)
            .map(|m| m.iter().map(|(&d, &p)| (d, p)).collect())
            .unwrap_or_default()
    }

    /// Every destination observed anywhere; the solve set for a model
    /// that must serve this data.
    pub fn all_destinations(&self) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self
            .p_d
            .values()
            .flat_map(|m| m.keys().copied())
            .collect();
        set.into_iter().collect()
    }
}

/// ln of the time density `f(t; θ)` induced by the shifted squared-log
/// loss: `−γ ln²(t/θ) − ln t − ln √(π/γ)`. This is the log-normal with
/// location `ln θ` and scale `1/√(2γ)`.
pub fn smsle_logpdf(t: f64, theta: f64, gamma: f64) -> Result<f64> {
    if !(t > 0.0) || !(theta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "time density needs positive time and location, got t={t}, theta={theta}"
        )));
    }
    let z = partition_smsle(gamma)?;
    let r = (t / theta).ln();
    Ok(-gamma * r * r - t.ln() - z.ln())
}

/// Normalizing constant of the shifted squared-log density: `√(π/γ)`,
/// independent of the location θ.
pub fn partition_smsle(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((PI / gamma).sqrt())
}

/// Observation-time density family around a predicted path time θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDensity {
    /// Log-normal induced by the shifted squared-log loss; location ln θ,
    /// scale 1/√(2γ).
    Smsle { gamma: f64 },
    /// Degenerate point mass at θ: noise-free prediction. Has no
    /// continuous pdf, so likelihood evaluation rejects it.
    Point,
}

impl TimeDensity {
    pub fn smsle(gamma: f64) -> Result<Self> {
        partition_smsle(gamma)?;
        Ok(TimeDensity::Smsle { gamma })
    }

    pub fn logpdf(&self, t: f64, theta: f64) -> Result<f64> {
        match *self {
            TimeDensity::Smsle { gamma } => smsle_logpdf(t, theta, gamma),
            TimeDensity::Point => Err(Error::InvalidInput(
                "the point density has no continuous pdf".into(),
            )),
        }
    }

    /// ∂/∂θ of `logpdf(t, θ)`.
    pub fn dlogpdf_dtheta(&self, t: f64, theta: f64) -> Result<f64> {
        match *self {
            TimeDensity::Smsle { gamma } => {
                if !(t > 0.0) || !(theta > 0.0) {
                    return Err(Error::InvalidInput(
                        "time density gradient needs positive arguments".into(),
                    ));
                }
                Ok(2.0 * gamma * (t / theta).ln() / theta)
            }
            TimeDensity::Point => Err(Error::InvalidInput(
                "the point density has no continuous pdf".into(),
            )),
        }
    }

    /// E[T]/θ: the factor converting a predicted path time into the mean
    /// observed time.
    pub fn mean_multiplier(&self) -> f64 {
        match *self {
            TimeDensity::Smsle { gamma } => (1.0 / (4.0 * gamma)).exp(),
            TimeDensity::Point => 1.0,
        }
    }

    /// Density-peak location over θ.
    pub fn mode_multiplier(&self) -> f64 {
        match *self {
            TimeDensity::Smsle { gamma } => (-1.0 / (2.0 * gamma)).exp(),
            TimeDensity::Point => 1.0,
        }
    }

    pub fn mean(&self, theta: f64) -> f64 {
        theta * self.mean_multiplier()
    }

    pub fn mode(&self, theta: f64) -> f64 {
        theta * self.mode_multiplier()
    }

    /// E[ln T]: `ln θ` for both members, which is what makes the
    /// geometric-mean predictor a plain average of log path times.
    pub fn expected_log(&self, theta: f64) -> f64 {
        theta.ln()
    }
}

/// Integration domain of a loss function's argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Real,
    Positive,
    Interval(f64, f64),
}

/// A probability density built from a loss: `exp[−L(x, θ)] / Z(θ)` on the
/// domain, zero outside. Minimizing the loss and maximizing this density
/// coincide exactly when `Z` does not depend on θ.
pub struct LossDensity<L> {
    loss: L,
    domain: Domain,
    theta: f64,
    log_z: f64,
    theta_constant: bool,
}

/// Normalizes `exp(−loss)` over the domain by adaptive quadrature and
/// probes a second θ to report whether the partition value moves with θ.
pub fn loss_to_logpdf<L>(loss: L, domain: Domain, theta: f64) -> Result<LossDensity<L>>
where
    L: Fn(f64, f64) -> f64,
{
    let z = loss_partition(&loss, domain, theta)?;
    let probe = theta + theta.abs().max(1.0);
    let z_probe = loss_partition(&loss, domain, probe)?;
    let theta_constant = (z.ln() - z_probe.ln()).abs() <= 1e-6;
    Ok(LossDensity {
        loss,
        domain,
        theta,
        log_z: z.ln(),
        theta_constant,
    })
}

fn loss_partition<L>(loss: &L, domain: Domain, theta: f64) -> Result<f64>
where
    L: Fn(f64, f64) -> f64,
{
    let g = |x: f64| (-loss(x, theta)).exp();
    let z = match domain {
        Domain::Real => integrate_real(g, QUAD_TOL),
        Domain::Positive => integrate_positive(g, QUAD_TOL),
        Domain::Interval(a, b) => integrate(g, a, b, QUAD_TOL),
    }
    .map_err(|_| Error::Quadrature("loss partition integral diverges".into()))?;
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Quadrature(format!(
            "loss partition integral is not a positive finite value: {z}"
        )));
    }
    Ok(z)
}

impl<L: Fn(f64, f64) -> f64> LossDensity<L> {
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// True when the probe at a second θ left the partition unchanged, so
    /// loss minimization and likelihood maximization coincide.
    pub fn theta_constant(&self) -> bool {
        self.theta_constant
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        let inside = match self.domain {
            Domain::Real => true,
            Domain::Positive => x > 0.0,
            Domain::Interval(a, b) => x >= a && x <= b,
        };
        if inside {
            -(self.loss)(x, self.theta) - self.log_z
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Immutable model state for one parameter point: features, utilities,
/// and value functions for a fixed destination set, behind a single
/// factorization. Everything downstream (likelihoods, gradients,
/// sampling, prediction) reads from here.
#[derive(Debug)]
pub struct Model<'g> {
    graph: &'g TurnGraph,
    t: Vec<f64>,
    params: ChoiceParams,
    density: TimeDensity,
    feats: Features,
    values: ValueSolution<'g>,
    max_steps: usize,
    rejected_walks: AtomicUsize,
}

impl<'g> Model<'g> {
    pub fn build(
        graph: &'g TurnGraph,
        t: Vec<f64>,
        params: ChoiceParams,
        density: TimeDensity,
        destinations: &[NodeId],
    ) -> Result<Self> {
        if t.len() != graph.n_states() {
            return Err(Error::InvalidInput(format!(
                "expected {} travel times, got {}",
                graph.n_states(),
                t.len()
            )));
        }
        if let Some(&bad) = t.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "travel times must be positive and finite, got {bad}"
            )));
        }
        let feats = build_features(graph, &t);
        let utils = compute_utilities(&feats, &params)?;
        let values = choice::solve_values(graph, utils, destinations)?;
        let max_steps = default_max_steps(graph);
        Ok(Self {
            graph,
            t,
            params,
            density,
            feats,
            values,
            max_steps,
            rejected_walks: AtomicUsize::new(0),
        })
    }

    pub fn graph(&self) -> &'g TurnGraph {
        self.graph
    }

    pub fn travel_times(&self) -> &[f64] {
        &self.t
    }

    pub fn params(&self) -> &ChoiceParams {
        &self.params
    }

    pub fn density(&self) -> TimeDensity {
        self.density
    }

    pub fn features(&self) -> &Features {
        &self.feats
    }

    pub fn values(&self) -> &ValueSolution<'g> {
        &self.values
    }

    pub fn solve_diagnostics(&self) -> SolveDiagnostics {
        self.values.diagnostics()
    }

    /// Walks rejected for exceeding the step cap, summed over all
    /// sampling done through this model.
    pub fn rejected_walks(&self) -> usize {
        self.rejected_walks.load(Ordering::Relaxed)
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Predicted time of an arc path: the sum of its arc travel times.
    pub fn path_time(&self, arcs: &[ArcId]) -> f64 {
        arcs.iter().map(|&a| self.t[a]).sum()
    }

    /// One route draw from the choice model, retrying rejected walks up
    /// to the standard attempt budget.
    pub fn sample_route<R: Rng>(&self, o: NodeId, d: NodeId, rng: &mut R) -> Result<Vec<ArcId>> {
        let (path, rejected) =
            self.values
                .sample_path_persistent(o, d, rng, self.max_steps, WALK_ATTEMPTS)?;
        if rejected > 0 {
            self.rejected_walks.fetch_add(rejected, Ordering::Relaxed);
        }
        Ok(path)
    }

    fn resolve(&self, obs: &Observation) -> Result<Vec<ArcId>> {
        let nodes = obs
            .path
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("observation has no path".into()))?;
        self.graph.resolve_node_path(nodes)
    }
}

/// Log-likelihood of a fully observed trip (o, d, path, t).
pub fn loglik_full(model: &Model, od: &OdDistributions, obs: &Observation) -> Result<f64> {
    let (d, t) = match (obs.effective_dest(), obs.t) {
        (Some(d), Some(t)) => (d, t),
        _ => {
            return Err(Error::InvalidInput(
                "full likelihood needs destination, path, and time".into(),
            ))
        }
    };
    let arcs = model.resolve(obs)?;
    let route_ll = model.values().path_loglik(&arcs, obs.o, d)?;
    let time_ll = model.density().logpdf(t, model.path_time(&arcs))?;
    Ok(od.ln_p_origin(obs.o) + od.ln_p_dest(obs.o, d) + route_ll + time_ll)
}

/// Log-likelihood of a pathless trip (o, d, t): the route is integrated
/// out by Monte Carlo over `k` draws from the choice model.
pub fn loglik_no_path<R: Rng>(
    model: &Model,
    od: &OdDistributions,
    o: NodeId,
    d: NodeId,
    t: f64,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(od.ln_p_origin(o) + od.ln_p_dest(o, d) + log_mean_density(model, o, d, t, k, rng)?)
}

/// `ln E[f(t; t̂)]` over routes, estimated from `k` samples. The mean of
/// densities is taken in log space: logsumexp of per-sample log-densities
/// minus ln k, never an average of raw densities.
pub fn log_mean_density<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    t: f64,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut logs = Vec::with_capacity(k);
    for _ in 0..k {
        let route = model.sample_route(o, d, rng)?;
        logs.push(model.density().logpdf(t, model.path_time(&route))?);
    }
    Ok(logsumexp(&logs) - (k as f64).ln())
}

/// Exact `ln E[f(t; t̂)]` by full path enumeration; `None` when the path
/// set is infinite or larger than `max_paths`.
pub fn exact_log_mean_density(
    model: &Model,
    o: NodeId,
    d: NodeId,
    t: f64,
    max_paths: usize,
) -> Result<Option<f64>> {
    let paths = match enumerate_paths(model.graph(), o, d, max_paths)? {
        Some(p) => p,
        None => return Ok(None),
    };
    let mut terms = Vec::with_capacity(paths.len());
    for path in &paths {
        let ll = model.values().path_loglik(path, o, d)?;
        terms.push(ll + model.density().logpdf(t, model.path_time(path))?);
    }
    Ok(Some(logsumexp(&terms)))
}

/// Log-likelihood of a timeless trip (o, d, path). Marginalizing the
/// observed time integrates the unit-mass density to one, leaving the
/// classical path-choice likelihood.
pub fn loglik_no_time(model: &Model, od: &OdDistributions, obs: &Observation) -> Result<f64> {
    let d = obs
        .effective_dest()
        .ok_or_else(|| Error::InvalidInput("observation has no destination".into()))?;
    let arcs = model.resolve(obs)?;
    Ok(od.ln_p_origin(obs.o) + od.ln_p_dest(obs.o, d) + model.values().path_loglik(&arcs, obs.o, d)?)
}

/// Posterior over candidate destinations for a trip that recorded only
/// its origin and duration. Candidates the walk cannot reach get zero
/// mass; all-unreachable is an error.
pub fn dest_posterior<R: Rng>(
    model: &Model,
    od: &OdDistributions,
    o: NodeId,
    t: f64,
    candidates: &[NodeId],
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate destinations".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &d in candidates {
        let prior = od.ln_p_dest(o, d);
        if prior == f64::NEG_INFINITY {
            scores.push(f64::NEG_INFINITY);
            continue;
        }
        match log_mean_density(model, o, d, t, k, rng) {
            Ok(lm) => scores.push(prior + lm),
            Err(Error::Unreachable { .. }) => scores.push(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        }
    }
    let total = logsumexp(&scores);
    if !total.is_finite() {
        return Err(Error::InvalidInput(
            "no candidate destination is reachable with positive mass".into(),
        ));
    }
    Ok(scores.iter().map(|s| (s - total).exp()).collect())
}

/// Weighted total log-likelihood of a mixed-granularity observation set.
/// Per-observation randomness comes from streams of one master seed keyed
/// by observation index, so the result is identical however the work is
/// scheduled. Failures carry the observation index.
pub fn mixed_loglik(
    model: &Model,
    od: &OdDistributions,
    observations: &[Observation],
    k: usize,
    seed: u64,
) -> Result<f64> {
    let terms = indexed_map(observations, |i, obs| -> Result<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let value = observation_loglik(model, od, obs, k, &mut rng)
            .map_err(|e| Error::Observation {
                index: i,
                msg: e.to_string(),
            })?;
        Ok(obs.weight * value)
    });
    let mut total = 0.0;
    for term in terms {
        total += term?;
    }
    Ok(total)
}

/// Dispatches one observation to its granularity's likelihood.
pub fn observation_loglik<R: Rng>(
    model: &Model,
    od: &OdDistributions,
    obs: &Observation,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    match obs.granularity() {
        Granularity::Full => loglik_full(model, od, obs),
        Granularity::NoTime => loglik_no_time(model, od, obs),
        Granularity::NoPath => {
            loglik_no_path(model, od, obs.o, obs.effective_dest().unwrap(), obs.t.unwrap(), k, rng)
        }
        Granularity::OdOnly => {
            let d = obs.effective_dest().unwrap();
            Ok(od.ln_p_origin(obs.o) + od.ln_p_dest(obs.o, d))
        }
        Granularity::OriginTime => {
            let t = obs.t.ok_or_else(|| {
                Error::InvalidInput("observation needs a destination or a time".into())
            })?;
            let dests = od.destinations(obs.o);
            if dests.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no destination has ever been observed from origin {}",
                    obs.o
                )));
            }
            let mut scores = Vec::with_capacity(dests.len());
            for (d, p) in dests {
                match log_mean_density(model, obs.o, d, t, k, rng) {
                    Ok(lm) => scores.push(p.ln() + lm),
                    Err(Error::Unreachable { .. }) => scores.push(f64::NEG_INFINITY),
                    Err(e) => return Err(e),
                }
            }
            let total = logsumexp(&scores);
            if !total.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "no observed destination is reachable from origin {}",
                    obs.o
                )));
            }
            Ok(od.ln_p_origin(obs.o) + total)
        }
    }
}

/// Score-function gradient of `ln E[f(t; t̂)]` over (b, T), sampling the
/// `k` routes from the current model. Also returns the log-mean estimate
/// itself. Per-sample terms are combined with softmax weights over the
/// log-densities, so a dominant sample cannot overflow the ratio.
pub fn grad_online<R: Rng>(
    model: &Model,
    o: NodeId,
    d: NodeId,
    t: f64,
    k: usize,
    rng: &mut R,
) -> Result<(f64, ParamGrad)> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut routes = Vec::with_capacity(k);
    let mut logf = Vec::with_capacity(k);
    for _ in 0..k {
        let route = model.sample_route(o, d, rng)?;
        logf.push(model.density().logpdf(t, model.path_time(&route))?);
        routes.push(route);
    }
    let value = logsumexp(&logf) - (k as f64).ln();
    let grad = weighted_score_grad(model, o, d, t, &routes, &logf)?;
    Ok((value, grad))
}

/// A fixed set of proposal routes with their proposal log-probabilities,
/// for the importance-weighted gradient. When the proposal's full support
/// is known it can be attached for verification against the model's.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub paths: Vec<Vec<ArcId>>,
    pub ln_probs: Vec<f64>,
    pub support: Option<Vec<Vec<ArcId>>>,
}

impl Proposal {
    /// Draws `k` routes from `model` and records their probabilities
    /// under it. Support verification is unnecessary for such proposals:
    /// every route of the target has positive probability here by
    /// construction.
    pub fn from_model<R: Rng>(
        model: &Model,
        o: NodeId,
        d: NodeId,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut paths = Vec::with_capacity(k);
        let mut ln_probs = Vec::with_capacity(k);
        for _ in 0..k {
            let route = model.sample_route(o, d, rng)?;
            ln_probs.push(model.values().path_loglik(&route, o, d)?);
            paths.push(route);
        }
        Ok(Self {
            paths,
            ln_probs,
            support: None,
        })
    }

    /// Draws `k` routes uniformly from the enumerated path set. Errors
    /// when the set is not enumerable.
    pub fn uniform_enumerated<R: Rng>(
        model: &Model,
        o: NodeId,
        d: NodeId,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let all = enumerate_paths(model.graph(), o, d, ENUMERATION_CAP)?.ok_or_else(|| {
            Error::InvalidInput("path set is not enumerable for a uniform proposal".into())
        })?;
        let ln_p = -(all.len() as f64).ln();
        let mut paths = Vec::with_capacity(k);
        for _ in 0..k {
            paths.push(all[rng.gen_range(0..all.len())].clone());
        }
        Ok(Self {
            ln_probs: vec![ln_p; k],
            paths,
            support: Some(all),
        })
    }
}

/// Importance-weighted variant of the score-function gradient, reusing
/// routes drawn once from a fixed proposal. Unbiased for the same target
/// as the online estimator whenever the proposal's support covers the
/// model's.
pub fn grad_offline(
    model: &Model,
    o: NodeId,
    d: NodeId,
    t: f64,
    proposal: &Proposal,
) -> Result<(f64, ParamGrad)> {
    if proposal.paths.is_empty() {
        return Err(Error::InvalidInput("empty proposal".into()));
    }
    if proposal.paths.len() != proposal.ln_probs.len() {
        return Err(Error::InvalidInput(
            "proposal paths and probabilities differ in length".into(),
        ));
    }
    if let Some(support) = &proposal.support {
        verify_support(model.graph(), o, d, support)?;
    }
    let k = proposal.paths.len();
    let mut shifted = Vec::with_capacity(k);
    let mut logf = Vec::with_capacity(k);
    for (path, &lnq) in proposal.paths.iter().zip(&proposal.ln_probs) {
        if !lnq.is_finite() {
            return Err(Error::ProposalSupport(
                "a proposal route has zero probability under the proposal".into(),
            ));
        }
        let lnp = model.values().path_loglik(path, o, d)?;
        let lf = model.density().logpdf(t, model.path_time(path))?;
        logf.push(lf);
        shifted.push(lf + lnp - lnq);
    }
    let value = logsumexp(&shifted) - (k as f64).ln();
    let grad = weighted_score_grad(model, o, d, t, &proposal.paths, &shifted)?;
    Ok((value, grad))
}

/// Checks that every model route appears in the declared proposal
/// support. A cyclic graph makes the model's support infinite, which no
/// declared finite support can cover.
fn verify_support(
    graph: &TurnGraph,
    o: NodeId,
    d: NodeId,
    support: &[Vec<ArcId>],
) -> Result<()> {
    let all = enumerate_paths(graph, o, d, ENUMERATION_CAP)?.ok_or_else(|| {
        Error::ProposalSupport(
            "model support is infinite or too large for the declared proposal support".into(),
        )
    })?;
    let declared: HashSet<&[ArcId]> = support.iter().map(|p| p.as_slice()).collect();
    for path in &all {
        if !declared.contains(path.as_slice()) {
            return Err(Error::ProposalSupport(format!(
                "a route of positive model probability is missing from the proposal support \
                 ({} arcs starting at arc {})",
                path.len(),
                path[0]
            )));
        }
    }
    Ok(())
}

/// Shared tail of both estimators: softmax-weights the per-route score
/// terms and subtracts the origin value gradient once.
fn weighted_score_grad(
    model: &Model,
    o: NodeId,
    d: NodeId,
    t: f64,
    routes: &[Vec<ArcId>],
    log_weights: &[f64],
) -> Result<ParamGrad> {
    let total = logsumexp(log_weights);
    if !total.is_finite() {
        return Err(Error::InvalidInput(
            "all sampled routes have vanishing weight".into(),
        ));
    }
    let mut grad = ParamGrad::zeros(model.graph().n_states());
    let mut scratch = ParamGrad::zeros(model.graph().n_states());
    for (route, &lw) in routes.iter().zip(log_weights) {
        let omega = (lw - total).exp();
        if omega == 0.0 {
            continue;
        }
        let (_, util_grad) =
            model
                .values()
                .path_utility_grad(model.features(), model.params(), route)?;
        scratch.clone_from(&util_grad);
        let dlf = model.density().dlogpdf_dtheta(t, model.path_time(route))?;
        for &a in route {
            scratch.t[a] += dlf;
        }
        grad.add_scaled(&scratch, omega);
    }
    let (_, origin_grad) =
        model
            .values()
            .origin_value_grad(model.features(), model.params(), o, d)?;
    grad.add_scaled(&origin_grad, -1.0);
    Ok(grad)
}
