//! Joint fitting of the choice weights and the arc travel times by
//! stochastic projected gradient ascent on the mixed likelihood, plus the
//! pace regularizer, hyperparameter random search, and the two-route
//! alternating scheme kept as a reproducible counterexample to naive
//! two-step estimation.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::choice::{ChoiceParams, ParamGrad};
use crate::mixture::{
    grad_offline, grad_online, Granularity, Model, Observation, OdDistributions, Proposal,
    TimeDensity, K_SYNTHETIC,
};
use crate::network::{project_turns, Network, NodeId, TravelTimeBounds, TurnGraph};
use crate::numeric::{golden_min, logsumexp};
use crate::parallel::indexed_map;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Which estimator integrates out the route of pathless observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Routes resampled from the current model every iteration.
    Online,
    /// Routes drawn once per epoch and reused with importance weights.
    Offline,
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Route samples per pathless observation.
    pub samples: usize,
    pub batch_size: usize,
    /// Iterations the smoothed objective is compared across.
    pub stop_window: usize,
    /// Minimum total improvement of the smoothed objective per window.
    pub stop_delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Starting value for every unfrozen choice weight.
    pub b0: f64,
    pub kind: EstimatorKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            lambda: 0.0,
            gamma: 1.0,
            samples: K_SYNTHETIC,
            batch_size: 1024,
            stop_window: 50,
            stop_delta: 0.01,
            max_iters: 400,
            seed: 7,
            b0: -2.0,
            kind: EstimatorKind::Online,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "regularization weight must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.samples == 0 || self.batch_size == 0 || self.stop_window == 0 || self.max_iters == 0
        {
            return Err(Error::InvalidInput(
                "samples, batch size, stop window, and max iterations must be positive".into(),
            ));
        }
        if !self.b0.is_finite() {
            return Err(Error::InvalidInput("initial weight must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// The smoothed objective improved less than the threshold.
    Converged,
    MaxIters,
    Diverged { iter: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub val_rmsle: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitDiagnostics {
    pub clamped: usize,
    pub negated: usize,
    pub factorizations: usize,
    pub rejected_walks: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ChoiceParams,
    pub t: Vec<f64>,
    pub best_objective: f64,
    pub trace: Vec<TracePoint>,
    pub diagnostics: FitDiagnostics,
    pub stop: StopReason,
    pub wall_s: f64,
}

/// Pace smoothness penalty: for every consecutive arc pair (a, b) in the
/// turn graph, the squared log ratio of their per-meter paces divided by
/// their combined length. Returns the value and its gradient in T.
pub fn regularization(t: &[f64], lengths: &[f64], graph: &TurnGraph) -> Result<(f64, Vec<f64>)> {
    let n = graph.n_states();
    if t.len() != n || lengths.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} travel times and lengths, got {} and {}",
            t.len(),
            lengths.len()
        )));
    }
    for a in 0..n {
        if !(t[a] > 0.0) || !(lengths[a] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "regularization needs positive times and lengths, arc {a} has t={}, L={}",
                t[a], lengths[a]
            )));
        }
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for src in 0..n {
        for tr in graph.transitions_from(src) {
            let dst = tr.to;
            let r = ((t[src] / lengths[src]) / (t[dst] / lengths[dst])).ln();
            let denom = lengths[src] + lengths[dst];
            value += r * r / denom;
            grad[src] += 2.0 * r / (denom * t[src]);
            grad[dst] -= 2.0 * r / (denom * t[dst]);
        }
    }
    Ok((value, grad))
}

/// Elementwise clamp of T into the per-arc box.
pub fn project_times(t: &mut [f64], bounds: &TravelTimeBounds) {
    for ((v, &lo), &hi) in t.iter_mut().zip(&bounds.t_min).zip(&bounds.t_max) {
        *v = v.clamp(lo, hi);
    }
}

/// Tangent-cone projection for ascent: zero every T component of the
/// gradient that points out of the box at an active bound.
pub fn project_gradient(grad: &mut ParamGrad, t: &[f64], bounds: &TravelTimeBounds) {
    for a in 0..t.len() {
        if (t[a] <= bounds.t_min[a] && grad.t[a] < 0.0)
            || (t[a] >= bounds.t_max[a] && grad.t[a] > 0.0)
        {
            grad.t[a] = 0.0;
        }
    }
}

/// Starting travel times: free-flow over 0.9, projected into the box.
pub fn initial_times(bounds: &TravelTimeBounds) -> Vec<f64> {
    let mut t: Vec<f64> = bounds.t_min.iter().map(|&lo| lo / 0.9).collect();
    project_times(&mut t, bounds);
    t
}

/// Data term of one observation: its log-likelihood contribution without
/// the OD frequency terms (constants in the parameters) and its gradient
/// in (b, T), both scaled by the observation weight.
fn observation_term(
    model: &Model,
    od: &OdDistributions,
    obs: &Observation,
    kind: EstimatorKind,
    proposal: Option<&Proposal>,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, ParamGrad)> {
    let (value, grad) = match obs.granularity() {
        Granularity::Full | Granularity::NoTime => {
            let d = obs.effective_dest().unwrap();
            let arcs = model.graph().resolve_node_path(obs.path.as_ref().unwrap())?;
            let (ll, mut grad) =
                model
                    .values()
                    .grad_path_loglik(model.features(), model.params(), &arcs, obs.o, d)?;
            match obs.t {
                Some(t) => {
                    let theta = model.path_time(&arcs);
                    let lf = model.density().logpdf(t, theta)?;
                    let dlf = model.density().dlogpdf_dtheta(t, theta)?;
                    for &a in &arcs {
                        grad.t[a] += dlf;
                    }
                    (ll + lf, grad)
                }
                None => (ll, grad),
            }
        }
        Granularity::NoPath => {
            let d = obs.effective_dest().unwrap();
            let t = obs.t.unwrap();
            match kind {
                EstimatorKind::Online => grad_online(model, obs.o, d, t, k, rng)?,
                EstimatorKind::Offline => {
                    let proposal = proposal.ok_or_else(|| {
                        Error::InvalidInput("no proposal drawn for a pathless observation".into())
                    })?;
                    grad_offline(model, obs.o, d, t, proposal)?
                }
            }
        }
        Granularity::OdOnly => (0.0, ParamGrad::zeros(model.graph().n_states())),
        Granularity::OriginTime => {
            // Destination marginalized over the empirical conditional;
            // routes always sampled fresh, whatever the estimator kind.
            let t = obs.t.unwrap();
            let dests = od.destinations(obs.o);
            if dests.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no destination has ever been observed from origin {}",
                    obs.o
                )));
            }
            let mut scores = Vec::with_capacity(dests.len());
            let mut grads = Vec::with_capacity(dests.len());
            for &(d, p) in &dests {
                match grad_online(model, obs.o, d, t, k, rng) {
                    Ok((v, g)) => {
                        scores.push(p.ln() + v);
                        grads.push(Some(g));
                    }
                    Err(Error::Unreachable { .. }) => {
                        scores.push(f64::NEG_INFINITY);
                        grads.push(None);
                    }
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
            let mut grad = ParamGrad::zeros(model.graph().n_states());
            for (s, g) in scores.iter().zip(&grads) {
                if let Some(g) = g {
                    grad.add_scaled(g, (s - total).exp());
                }
            }
            (total, grad)
        }
    };
    let mut grad = grad;
    grad.scale(obs.weight);
    Ok((obs.weight * value, grad))
}

/// Weighted data objective and gradient of an observation slice under one
/// model: the mixed log-likelihood without its OD constants. `indices`
/// selects the observations; per-observation randomness is keyed on the
/// global index so the result is schedule-independent.
pub fn data_objective_grad(
    model: &Model,
    od: &OdDistributions,
    observations: &[Observation],
    indices: &[usize],
    kind: EstimatorKind,
    proposals: &[Option<Proposal>],
    k: usize,
    seed: u64,
) -> Result<(f64, ParamGrad)> {
    let terms = indexed_map(indices, |_, &gi| -> Result<(f64, ParamGrad)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(gi as u64);
        let proposal = proposals.get(gi).and_then(|p| p.as_ref());
        observation_term(model, od, &observations[gi], kind, proposal, k, &mut rng)
            .map_err(|e| Error::Observation {
                index: gi,
                msg: e.to_string(),
            })
    });
    let mut value = 0.0;
    let mut grad = ParamGrad::zeros(model.graph().n_states());
    for term in terms {
        let (v, g) = term?;
        value += v;
        grad.add_scaled(&g, 1.0);
    }
    Ok((value, grad))
}

struct Adam {
    m_b: [f64; 5],
    v_b: [f64; 5],
    m_t: Vec<f64>,
    v_t: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n_arcs: usize) -> Self {
        Self {
            m_b: [0.0; 5],
            v_b: [0.0; 5],
            m_t: vec![0.0; n_arcs],
            v_t: vec![0.0; n_arcs],
            step: 0,
        }
    }

    /// One ascent step; the caller has already masked and projected the
    /// gradient, so frozen and bound-blocked coordinates carry zeros.
    fn ascend(&mut self, eta: f64, grad: &ParamGrad, params: &mut ChoiceParams, t: &mut [f64]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for k in 0..5 {
            let g = grad.b[k];
            self.m_b[k] = ADAM_BETA1 * self.m_b[k] + (1.0 - ADAM_BETA1) * g;
            self.v_b[k] = ADAM_BETA2 * self.v_b[k] + (1.0 - ADAM_BETA2) * g * g;
            if !params.frozen[k] {
                params.weights[k] +=
                    eta * (self.m_b[k] / c1) / ((self.v_b[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        for a in 0..t.len() {
            let g = grad.t[a];
            self.m_t[a] = ADAM_BETA1 * self.m_t[a] + (1.0 - ADAM_BETA1) * g;
            self.v_t[a] = ADAM_BETA2 * self.v_t[a] + (1.0 - ADAM_BETA2) * g * g;
            t[a] += eta * (self.m_t[a] / c1) / ((self.v_t[a] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Maximizes the mixed data log-likelihood minus `lambda` times the pace
/// penalty by projected Adam over (b, T). Gradients are tangent-cone
/// projected before the step and T is clamped into the box after it; the
/// best-seen iterate is returned. Stops when the window-smoothed
/// objective improves less than the threshold, at the iteration cap, or
/// on divergence (recorded in the stop reason, never panicking).
pub fn fit(
    net: &Network,
    observations: &[Observation],
    bounds: &TravelTimeBounds,
    config: &EstimatorConfig,
    validation: Option<&[Observation]>,
) -> Result<FitResult> {
    config.validate()?;
    if observations.is_empty() {
        return Err(Error::InvalidInput("no observations to fit".into()));
    }
    let graph = project_turns(net);
    let n = graph.n_states();
    if bounds.t_min.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected bounds for {n} arcs, got {}",
            bounds.t_min.len()
        )));
    }
    for obs in observations {
        obs.validate(graph.n_nodes())?;
    }
    let lengths: Vec<f64> = net.arcs().iter().map(|a| a.length_m).collect();
    let density = TimeDensity::smsle(config.gamma)?;
    let od = OdDistributions::from_observations(observations);

    let mut params = ChoiceParams::default();
    for k in 0..4 {
        params.weights[k] = config.b0;
    }
    let mut t = initial_times(bounds);
    let mut adam = Adam::new(n);

    let n_obs = observations.len();
    let batch_size = config.batch_size.min(n_obs);
    let total_weight: f64 = observations.iter().map(|o| o.weight).sum();
    let mut order: Vec<usize> = (0..n_obs).collect();
    let mut perm_rng = ChaCha12Rng::seed_from_u64(config.seed);
    perm_rng.set_stream(u64::MAX);
    let mut cursor = n_obs; // forces a shuffle before the first batch
    let mut epoch = 0usize;

    let pathless: Vec<usize> = observations
        .iter()
        .enumerate()
        .filter(|(_, o)| o.granularity() == Granularity::NoPath)
        .map(|(i, _)| i)
        .collect();
    let mut proposals: Vec<Option<Proposal>> = vec![None; n_obs];

    let mut diag = FitDiagnostics::default();
    let mut trace: Vec<TracePoint> = Vec::with_capacity(config.max_iters);
    let mut best: Option<(f64, ChoiceParams, Vec<f64>)> = None;
    let mut stop = StopReason::MaxIters;
    let started = Instant::now();

    for iter in 0..config.max_iters {
        if cursor >= n_obs {
            order.shuffle(&mut perm_rng);
            cursor = 0;
            epoch += 1;
            if config.kind == EstimatorKind::Offline && !pathless.is_empty() {
                match refresh_proposals(
                    &graph,
                    &t,
                    &params,
                    density,
                    observations,
                    &pathless,
                    config,
                    epoch,
                    &mut proposals,
                    &mut diag,
                ) {
                    Ok(()) => {}
                    Err(e) if iter > 0 => {
                        stop = StopReason::Diverged {
                            iter,
                            detail: e.to_string(),
                        };
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let batch = &order[cursor..(cursor + batch_size).min(n_obs)];
        cursor += batch.len();

        let mut dests: BTreeSet<NodeId> = BTreeSet::new();
        for &gi in batch {
            match observations[gi].effective_dest() {
                Some(d) => {
                    dests.insert(d);
                }
                None => {
                    for (d, _) in od.destinations(observations[gi].o) {
                        dests.insert(d);
                    }
                }
            }
        }
        let dests: Vec<NodeId> = dests.into_iter().collect();
        let model = match Model::build(&graph, t.clone(), params, density, &dests) {
            Ok(m) => m,
            Err(e) if iter > 0 => {
                stop = StopReason::Diverged {
                    iter,
                    detail: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let solve = model.solve_diagnostics();
        diag.clamped += solve.clamped;
        diag.negated += solve.negated;
        diag.factorizations += solve.factorizations;

        let batch_seed = config.seed.wrapping_add(iter as u64 + 1);
        let (batch_value, mut grad) = data_objective_grad(
            &model,
            &od,
            observations,
            batch,
            config.kind,
            &proposals,
            config.samples,
            batch_seed,
        )?;
        diag.rejected_walks += model.rejected_walks();

        let batch_weight: f64 = batch.iter().map(|&gi| observations[gi].weight).sum();
        let scale = total_weight / batch_weight;
        let mut objective = scale * batch_value;
        grad.scale(scale);
        if config.lambda > 0.0 {
            let (r, rg) = regularization(&t, &lengths, &graph)?;
            objective -= config.lambda * r;
            for a in 0..n {
                grad.t[a] -= config.lambda * rg[a];
            }
        }
        grad.mask_frozen(&params);
        project_gradient(&mut grad, &t, bounds);

        if !objective.is_finite() || !grad.max_abs().is_finite() {
            stop = StopReason::Diverged {
                iter,
                detail: format!("objective or gradient became non-finite at value {objective}"),
            };
            break;
        }

        if best.as_ref().map_or(true, |(b, _, _)| objective > *b) {
            best = Some((objective, params, t.clone()));
        }

        adam.ascend(config.eta, &grad, &mut params, &mut t);
        project_times(&mut t, bounds);

        let val_rmsle = match validation {
            Some(val) if (iter + 1) % config.stop_window == 0 || iter + 1 == config.max_iters => {
                Some(validation_rmsle(
                    &graph, &t, &params, density, val, config.samples, config.seed,
                )?)
            }
            _ => None,
        };
        trace.push(TracePoint {
            iter,
            objective,
            val_rmsle,
            wall_s: started.elapsed().as_secs_f64(),
        });

        let w = config.stop_window;
        if trace.len() >= 2 * w {
            let mean = |points: &[TracePoint]| {
                points.iter().map(|p| p.objective).sum::<f64>() / points.len() as f64
            };
            let recent = mean(&trace[trace.len() - w..]);
            let earlier = mean(&trace[trace.len() - 2 * w..trace.len() - w]);
            if (recent - earlier).abs() < config.stop_delta {
                stop = StopReason::Converged;
                break;
            }
        }
    }

    let (best_objective, params, t) = best.ok_or_else(|| {
        Error::InvalidInput("fitting diverged before completing a single iteration".into())
    })?;
    Ok(FitResult {
        params,
        t,
        best_objective,
        trace,
        diagnostics: diag,
        stop,
        wall_s: started.elapsed().as_secs_f64(),
    })
}

/// Draws fresh proposal routes for every pathless observation from the
/// model at the current iterate. Runs once per epoch; later iterations of
/// the epoch reuse the routes through importance weights.
#[allow(clippy::too_many_arguments)]
fn refresh_proposals(
    graph: &TurnGraph,
    t: &[f64],
    params: &ChoiceParams,
    density: TimeDensity,
    observations: &[Observation],
    pathless: &[usize],
    config: &EstimatorConfig,
    epoch: usize,
    proposals: &mut [Option<Proposal>],
    diag: &mut FitDiagnostics,
) -> Result<()> {
    let dests: BTreeSet<NodeId> = pathless
        .iter()
        .map(|&gi| observations[gi].effective_dest().unwrap())
        .collect();
    let dests: Vec<NodeId> = dests.into_iter().collect();
    let model = Model::build(graph, t.to_vec(), *params, density, &dests)?;
    let solve = model.solve_diagnostics();
    diag.clamped += solve.clamped;
    diag.negated += solve.negated;
    diag.factorizations += solve.factorizations;
    let drawn = indexed_map(pathless, |_, &gi| -> Result<(usize, Proposal)> {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64) ^ !0u64);
        rng.set_stream(gi as u64);
        let obs = &observations[gi];
        let proposal = Proposal::from_model(
            &model,
            obs.o,
            obs.effective_dest().unwrap(),
            config.samples,
            &mut rng,
        )
        .map_err(|e| Error::Observation {
            index: gi,
            msg: e.to_string(),
        })?;
        Ok((gi, proposal))
    });
    for item in drawn {
        let (gi, proposal) = item?;
        proposals[gi] = Some(proposal);
    }
    diag.rejected_walks += model.rejected_walks();
    Ok(())
}

/// Validation RMSLE of geometric-mean predictions at the given iterate,
/// over the validation observations that carry a time.
fn validation_rmsle(
    graph: &TurnGraph,
    t: &[f64],
    params: &ChoiceParams,
    density: TimeDensity,
    validation: &[Observation],
    k: usize,
    seed: u64,
) -> Result<f64> {
    let timed: Vec<&Observation> = validation
        .iter()
        .filter(|o| o.t.is_some() && o.effective_dest().is_some())
        .collect();
    if timed.is_empty() {
        return Err(Error::InvalidInput(
            "validation set has no timed observations".into(),
        ));
    }
    let dests: BTreeSet<NodeId> = timed.iter().map(|o| o.effective_dest().unwrap()).collect();
    let dests: Vec<NodeId> = dests.into_iter().collect();
    let model = Model::build(graph, t.to_vec(), *params, density, &dests)?;
    let pairs = indexed_map(&timed, |i, obs| -> Result<(f64, f64)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xd1b5_4a32_d192_ed03);
        rng.set_stream(i as u64);
        let pred = crate::inference::predict_geomean(
            &model,
            obs.o,
            obs.effective_dest().unwrap(),
            k,
            &mut rng,
        )?;
        Ok((pred, obs.t.unwrap()))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    crate::inference::rmsle(&pairs)
}

/// The two-route instance: a free route with estimated time x against a
/// fixed alternative, both truly taking `observed` minutes. Closed forms
/// for the counterexample live here so tests, the demo, and the
/// acceptance suite share one definition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoArcInstance {
    /// Model time of the fixed alternative route.
    pub fixed_time: f64,
    /// Observed duration of every trip.
    pub observed: f64,
    /// Starting value of the estimated time x.
    pub x0: f64,
}

impl Default for TwoArcInstance {
    fn default() -> Self {
        Self {
            fixed_time: 1.0,
            observed: 2.0,
            x0: 1.0,
        }
    }
}

impl TwoArcInstance {
    /// Probability of choosing the estimated route at time x, under unit
    /// time sensitivity: a two-way logit over (−x, −fixed).
    pub fn choice_prob(&self, x: f64) -> f64 {
        1.0 / (1.0 + (x - self.fixed_time).exp())
    }

    /// Expected squared log error of predicting each chosen route's
    /// model time against the observed duration.
    pub fn expected_msle(&self, x: f64) -> f64 {
        let p = self.choice_prob(x);
        let e_free = (self.observed / x).ln().powi(2);
        let e_fixed = (self.observed / self.fixed_time).ln().powi(2);
        p * e_free + (1.0 - p) * e_fixed
    }

    /// Joint 1-D minimum of the expected squared log error over x.
    pub fn joint_minimum(&self) -> (f64, f64) {
        golden_min(
            |x| self.expected_msle(x),
            self.x0.min(self.fixed_time),
            3.0 * self.observed,
            1e-10,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveVariant {
    /// x updated to reproduce the mean observed time under the current
    /// route split.
    ExpectedTime,
    /// x updated to minimize the expected loss under the current split.
    ExpectedLoss,
}

/// Where the diverging naive trace is cut off.
pub const NAIVE_TRACE_CAP: f64 = 1e15;

/// The two-step alternating scheme on the two-route instance: iterate
/// route-choice estimation and time re-estimation. Returns the trace of
/// x, starting at x0. The expected-time variant grows without bound and
/// its trace is truncated at the cap; the expected-loss variant reaches a
/// fixed point that is not the joint optimum.
pub fn naive_alternating_fit(
    instance: &TwoArcInstance,
    variant: NaiveVariant,
    iters: usize,
) -> Vec<f64> {
    let mut x = instance.x0;
    let mut trace = vec![x];
    for _ in 0..iters {
        let p = instance.choice_prob(x);
        let next = match variant {
            // p x + (1−p) fixed = observed, solved for x.
            NaiveVariant::ExpectedTime => {
                (instance.observed - (1.0 - p) * instance.fixed_time) / p
            }
            // argmin over x of p ln²(observed/x).
            NaiveVariant::ExpectedLoss => instance.observed,
        };
        let next = if next.is_finite() {
            next.min(NAIVE_TRACE_CAP)
        } else {
            NAIVE_TRACE_CAP
        };
        trace.push(next);
        if (next - x).abs() < 1e-12 || next >= NAIVE_TRACE_CAP {
            break;
        }
        x = next;
    }
    trace
}

#[derive(Debug, Clone)]
pub struct SearchCandidate {
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub val_rmsle: f64,
}

#[derive(Debug)]
pub struct SearchResult {
    pub best: EstimatorConfig,
    pub best_fit: FitResult,
    /// One row per attempted candidate, in draw order; failed fits carry
    /// an infinite score.
    pub leaderboard: Vec<SearchCandidate>,
}

/// Random hyperparameter search: candidate 0 is the base configuration
/// itself, the rest draw eta, gamma, and lambda log-uniformly. Returns
/// the candidate with the lowest validation RMSLE. Errors only when
/// every candidate's fit fails.
pub fn random_search(
    net: &Network,
    train: &[Observation],
    validation: &[Observation],
    bounds: &TravelTimeBounds,
    base: &EstimatorConfig,
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::InvalidInput("search budget must be positive".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidInput(
            "hyperparameter search needs a validation set".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha12Rng, lo: f64, hi: f64| -> f64 {
        let u: f64 = rand::Rng::gen(rng);
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    };
    let graph = project_turns(net);
    let mut leaderboard = Vec::with_capacity(budget);
    let mut best: Option<(f64, EstimatorConfig, FitResult)> = None;
    for c in 0..budget {
        let config = if c == 0 {
            base.clone()
        } else {
            let mut cand = base.clone();
            cand.eta = log_uniform(&mut rng, 1e-3, 1e-1);
            cand.gamma = log_uniform(&mut rng, 0.5, 8.0);
            cand.lambda = log_uniform(&mut rng, 1e-4, 1.0);
            cand
        };
        let score = fit(net, train, bounds, &config, None).and_then(|fitted| {
            let density = TimeDensity::smsle(config.gamma)?;
            validation_rmsle(
                &graph,
                &fitted.t,
                &fitted.params,
                density,
                validation,
                config.samples,
                config.seed,
            )
            .map(|rmsle| (rmsle, fitted))
        });
        match score {
            Ok((rmsle, fitted)) => {
                leaderboard.push(SearchCandidate {
                    eta: config.eta,
                    gamma: config.gamma,
                    lambda: config.lambda,
                    val_rmsle: rmsle,
                });
                if best.as_ref().map_or(true, |(b, _, _)| rmsle < *b) {
                    best = Some((rmsle, config, fitted));
                }
            }
            Err(_) => {
                leaderboard.push(SearchCandidate {
                    eta: config.eta,
                    gamma: config.gamma,
                    lambda: config.lambda,
                    val_rmsle: f64::INFINITY,
                });
            }
        }
    }
    match best {
        Some((_, best, best_fit)) => Ok(SearchResult {
            best,
            best_fit,
            leaderboard,
        }),
        None => Err(Error::InvalidInput(
            "every hyperparameter candidate failed to fit".into(),
        )),
    }
}
