//! Recursive-logit route choice.
//!
//! The choice over all paths from o to d is multinomial logit with path
//! utility equal to the sum of transition utilities. Rather than
//! enumerating paths, per-state expected utilities solve a linear system
//! on the turn-expanded graph with one appended absorbing state per trip:
//! `z = M z + t_d`, where `M` holds `exp(v)` per transition and `t_d`
//! marks the arcs entering the destination. One LU factorization of
//! `(I - M)` serves every destination's forward solve and, transposed,
//! every origin's gradient solve.

use std::collections::HashMap;

use rand::Rng;

use crate::linalg::LuFactors;
use crate::network::{ArcId, Features, NodeId, TurnGraph, N_FEATURES};
use crate::numeric::logsumexp;
use crate::{Error, Result};

/// Smallest admissible solved value; entries below are clamped up before
/// any logarithm or reciprocal.
pub const Z_FLOOR: f64 = 1e-250;

/// Utility weights aligned with the feature channels
/// (tt non-residential, tt residential, intersection, left, u-turn).
/// Frozen channels are excluded from estimation; by default only the
/// u-turn penalty is frozen, at -5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceParams {
    pub weights: [f64; N_FEATURES],
    pub frozen: [bool; N_FEATURES],
}

impl ChoiceParams {
    pub fn new(weights: [f64; N_FEATURES]) -> Self {
        Self {
            weights,
            frozen: [false, false, false, false, true],
        }
    }

    pub fn with_frozen(weights: [f64; N_FEATURES], frozen: [bool; N_FEATURES]) -> Self {
        Self { weights, frozen }
    }

    /// Travel-time weight applied to an arc of the given class.
    pub fn tt_weight(&self, class: crate::network::ArcClass) -> f64 {
        self.weights[class.tt_channel()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("non-finite choice weight".into()))
        }
    }
}

impl Default for ChoiceParams {
    fn default() -> Self {
        Self::new([-2.0, -2.0, -2.0, -2.0, -5.0])
    }
}

/// Transition utilities on the turn-graph pattern plus entry utilities for
/// the first arc of a trip.
#[derive(Debug, Clone)]
pub struct UtilityMatrix {
    pub trans: Vec<f64>,
    pub entry: Vec<f64>,
}

pub fn compute_utilities(feats: &Features, params: &ChoiceParams) -> Result<UtilityMatrix> {
    params.validate()?;
    let dot = |f: &[f64; N_FEATURES]| -> f64 {
        f.iter().zip(&params.weights).map(|(a, b)| a * b).sum()
    };
    Ok(UtilityMatrix {
        trans: feats.trans.iter().map(dot).collect(),
        entry: feats.entry.iter().map(dot).collect(),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveDiagnostics {
    /// Entries lifted to the floor (includes states that cannot reach the
    /// destination, whose exact value is zero).
    pub clamped: usize,
    /// Negative solved entries replaced by their absolute value.
    pub negated: usize,
    /// LU factorizations performed; always 1 per solve.
    pub factorizations: usize,
}

/// Per-destination value functions over one shared factorization.
#[derive(Debug)]
pub struct ValueSolution<'g> {
    graph: &'g TurnGraph,
    utils: UtilityMatrix,
    /// exp of transition utilities, the nonzeros of M.
    m_vals: Vec<f64>,
    /// exp of entry utilities.
    entry_vals: Vec<f64>,
    lu: LuFactors,
    dests: Vec<NodeId>,
    slot_of: HashMap<NodeId, usize>,
    /// One vector per destination, length n_states + 1; the final entry is
    /// the absorbing state and is identically 1.
    z: Vec<Vec<f64>>,
    diag: SolveDiagnostics,
}

/// Solves the value systems for every requested destination.
pub fn solve_values<'g>(
    graph: &'g TurnGraph,
    utils: UtilityMatrix,
    destinations: &[NodeId],
) -> Result<ValueSolution<'g>> {
    let n = graph.n_states();
    assert_eq!(utils.trans.len(), graph.n_transitions());
    assert_eq!(utils.entry.len(), n);
    let m_vals: Vec<f64> = utils.trans.iter().map(|v| v.exp()).collect();
    let entry_vals: Vec<f64> = utils.entry.iter().map(|v| v.exp()).collect();

    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i + i * n] = 1.0;
    }
    for src in 0..n {
        for (t, tr) in graph.range_from(src).zip(graph.transitions_from(src)) {
            a[src + tr.to * n] -= m_vals[t];
        }
    }
    let lu = LuFactors::factorize(n, a).map_err(|e| match e {
        Error::Singular { step, pivot } => {
            let _ = (step, pivot);
            Error::InvalidInput(
                "value function diverges; utilities too close to zero".into(),
            )
        }
        other => other,
    })?;
    let mut diag = SolveDiagnostics {
        factorizations: 1,
        ..Default::default()
    };

    let mut dests = Vec::new();
    let mut slot_of = HashMap::new();
    let mut z = Vec::new();
    for &d in destinations {
        if slot_of.contains_key(&d) {
            continue;
        }
        if d >= graph.n_nodes() {
            return Err(Error::InvalidInput(format!("destination {d} out of range")));
        }
        let mut rhs = vec![0.0; n];
        for s in 0..n {
            if graph.arc_head(s) == d {
                rhs[s] = 1.0;
            }
        }
        lu.solve_in_place(&mut rhs);
        for v in rhs.iter_mut() {
            if *v < 0.0 {
                *v = v.abs();
                diag.negated += 1;
            }
            if *v < Z_FLOOR {
                *v = Z_FLOOR;
                diag.clamped += 1;
            }
        }
        rhs.push(1.0); // absorbing state
        slot_of.insert(d, dests.len());
        dests.push(d);
        z.push(rhs);
    }

    Ok(ValueSolution {
        graph,
        utils,
        m_vals,
        entry_vals,
        lu,
        dests,
        slot_of,
        z,
        diag,
    })
}

/// Row-stochastic next-step distributions toward one destination.
/// `probs[t]` is the probability of transition `t` from its source state;
/// `stop[a]` the probability of absorbing at the destination from state
/// `a`. States that cannot reach the destination are undefined.
#[derive(Debug, Clone)]
pub struct TransitionProbs {
    pub dest: NodeId,
    pub probs: Vec<f64>,
    pub stop: Vec<f64>,
    pub defined: Vec<bool>,
}

impl<'g> ValueSolution<'g> {
    pub fn graph(&self) -> &TurnGraph {
        self.graph
    }

    pub fn utilities(&self) -> &UtilityMatrix {
        &self.utils
    }

    pub fn destinations(&self) -> &[NodeId] {
        &self.dests
    }

    pub fn diagnostics(&self) -> SolveDiagnostics {
        self.diag
    }

    fn slot(&self, d: NodeId) -> Result<usize> {
        self.slot_of.get(&d).copied().ok_or_else(|| {
            Error::InvalidInput(format!("destination {d} was not part of the solve"))
        })
    }

    /// Solved state values for destination `d`: one entry per arc state
    /// plus the absorbing entry (always 1) at the end.
    pub fn z(&self, d: NodeId) -> Result<&[f64]> {
        Ok(&self.z[self.slot(d)?])
    }

    /// Expected downstream utility (logsum value) of arc state `a` toward
    /// `d`, `ln z_a`.
    pub fn state_value(&self, d: NodeId, a: ArcId) -> Result<f64> {
        Ok(self.z(d)?[a].ln())
    }

    fn reachable(z: &[f64], a: ArcId) -> bool {
        z[a] > Z_FLOOR
    }

    /// Expected utility at the start of a trip from node `o` toward `d`.
    pub fn origin_value(&self, o: NodeId, d: NodeId) -> Result<f64> {
        let z = self.z(d)?;
        let terms: Vec<f64> = self
            .graph
            .arcs_from(o)
            .iter()
            .filter(|&&a| Self::reachable(z, a))
            .map(|&a| self.utils.entry[a] + z[a].ln())
            .collect();
        let w = logsumexp(&terms);
        if w.is_finite() {
            Ok(w)
        } else {
            Err(Error::Unreachable { origin: o, dest: d })
        }
    }

    /// First-step distribution over the arcs leaving `o`.
    pub fn origin_step_probs(&self, o: NodeId, d: NodeId) -> Result<Vec<(ArcId, f64)>> {
        let z = self.z(d)?;
        let arcs: Vec<ArcId> = self
            .graph
            .arcs_from(o)
            .iter()
            .copied()
            .filter(|&a| Self::reachable(z, a))
            .collect();
        if arcs.is_empty() {
            return Err(Error::Unreachable { origin: o, dest: d });
        }
        let logs: Vec<f64> = arcs.iter().map(|&a| self.utils.entry[a] + z[a].ln()).collect();
        let total = logsumexp(&logs);
        if !total.is_finite() {
            return Err(Error::Unreachable { origin: o, dest: d });
        }
        Ok(arcs
            .into_iter()
            .zip(logs)
            .map(|(a, l)| (a, (l - total).exp()))
            .collect())
    }

    /// Full next-step distributions for destination `d`.
    pub fn transition_probs(&self, d: NodeId) -> Result<TransitionProbs> {
        let z = self.z(d)?;
        let n = self.graph.n_states();
        let mut probs = vec![0.0; self.graph.n_transitions()];
        let mut stop = vec![0.0; n];
        let mut defined = vec![false; n];
        for a in 0..n {
            if !Self::reachable(z, a) {
                continue;
            }
            let range = self.graph.range_from(a);
            let mut total = if self.graph.arc_head(a) == d { 1.0 } else { 0.0 };
            for (t, tr) in range.clone().zip(self.graph.transitions_from(a)) {
                total += self.m_vals[t] * z[tr.to];
            }
            if total <= 0.0 {
                continue;
            }
            defined[a] = true;
            if self.graph.arc_head(a) == d {
                stop[a] = 1.0 / total;
            }
            for (t, tr) in range.zip(self.graph.transitions_from(a)) {
                probs[t] = self.m_vals[t] * z[tr.to] / total;
            }
        }
        Ok(TransitionProbs {
            dest: d,
            probs,
            stop,
            defined,
        })
    }

    /// Samples one path from `o` to `d`. Fails with a trapped-walk error
    /// when the walk exceeds `max_steps` arcs.
    pub fn sample_path<R: Rng>(
        &self,
        o: NodeId,
        d: NodeId,
        rng: &mut R,
        max_steps: usize,
    ) -> Result<Vec<ArcId>> {
        self.sample_path_persistent(o, d, rng, max_steps, 1)
            .map(|(path, _)| path)
    }

    /// Samples one path, rejecting and restarting trapped walks up to
    /// `attempts` times. Returns the path and the number of rejected
    /// walks.
    pub fn sample_path_persistent<R: Rng>(
        &self,
        o: NodeId,
        d: NodeId,
        rng: &mut R,
        max_steps: usize,
        attempts: usize,
    ) -> Result<(Vec<ArcId>, usize)> {
        let z = self.z(d)?;
        for attempt in 0..attempts {
            match self.try_walk(o, d, z, rng, max_steps)? {
                Some(path) => return Ok((path, attempt)),
                None => continue,
            }
        }
        Err(Error::TrappedWalk {
            max_steps,
            attempts,
        })
    }

    fn try_walk<R: Rng>(
        &self,
        o: NodeId,
        d: NodeId,
        z: &[f64],
        rng: &mut R,
        max_steps: usize,
    ) -> Result<Option<Vec<ArcId>>> {
        // First arc from the origin node.
        let first_choices = self.origin_step_probs(o, d)?;
        let mut path = Vec::new();
        let mut current = {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut chosen = first_choices[first_choices.len() - 1].0;
            for &(a, p) in &first_choices {
                cum += p;
                if u < cum {
                    chosen = a;
                    break;
                }
            }
            chosen
        };
        path.push(current);
        for _ in 0..max_steps {
            let at_dest = self.graph.arc_head(current) == d;
            let mut weights: Vec<(Option<ArcId>, f64)> = Vec::new();
            if at_dest {
                weights.push((None, 1.0));
            }
            for (t, tr) in self
                .graph
                .range_from(current)
                .zip(self.graph.transitions_from(current))
            {
                let w = self.m_vals[t] * z[tr.to];
                if w > 0.0 && Self::reachable(z, tr.to) {
                    weights.push((Some(tr.to), w));
                }
            }
            let total: f64 = weights.iter().map(|&(_, w)| w).sum();
            if total <= 0.0 {
                // Dead state; treat like a trapped walk.
                return Ok(None);
            }
            let u: f64 = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = weights[weights.len() - 1].0;
            for &(a, w) in &weights {
                cum += w;
                if u < cum {
                    pick = a;
                    break;
                }
            }
            match pick {
                None => return Ok(Some(path)),
                Some(next) => {
                    path.push(next);
                    current = next;
                }
            }
        }
        Ok(None)
    }

    fn transition_between(&self, from: ArcId, to: ArcId) -> Result<usize> {
        self.graph
            .range_from(from)
            .zip(self.graph.transitions_from(from))
            .find(|(_, tr)| tr.to == to)
            .map(|(t, _)| t)
            .ok_or_else(|| {
                Error::InvalidInput(format!("no transition from arc {from} to arc {to}"))
            })
    }

    /// Total utility of a path: entry utility of its first arc plus the
    /// transition utilities along it.
    pub fn path_utility(&self, path: &[ArcId]) -> Result<f64> {
        validate_nonempty(path, self.graph.n_states())?;
        let mut v = self.utils.entry[path[0]];
        for w in path.windows(2) {
            v += self.utils.trans[self.transition_between(w[0], w[1])?];
        }
        Ok(v)
    }

    /// Log-probability of a full path from `o` to `d`:
    /// total utility minus the origin value.
    pub fn path_loglik(&self, path: &[ArcId], o: NodeId, d: NodeId) -> Result<f64> {
        self.check_endpoints(path, o, d)?;
        Ok(self.path_utility(path)? - self.origin_value(o, d)?)
    }

    fn check_endpoints(&self, path: &[ArcId], o: NodeId, d: NodeId) -> Result<()> {
        validate_nonempty(path, self.graph.n_states())?;
        if self.graph.arc_tail(path[0]) != o {
            return Err(Error::InvalidInput(format!(
                "path starts at node {}, expected {o}",
                self.graph.arc_tail(path[0])
            )));
        }
        if self.graph.arc_head(path[path.len() - 1]) != d {
            return Err(Error::InvalidInput(format!(
                "path ends at node {}, expected {d}",
                self.graph.arc_head(path[path.len() - 1])
            )));
        }
        Ok(())
    }

    /// Origin value together with its gradient in (b, T).
    ///
    /// With `w = ln(q' z)` and `(I - M)^T y = q'`, the chain rule gives
    /// `dw = [dq' z + y (dM) z] / (q' z)`; `dM` and `dq'` are linear in
    /// the feature rows, so one transpose solve per (o, d) yields the
    /// whole gradient in a single pass over the transitions.
    pub fn origin_value_grad(
        &self,
        feats: &Features,
        params: &ChoiceParams,
        o: NodeId,
        d: NodeId,
    ) -> Result<(f64, ParamGrad)> {
        let z = self.z(d)?;
        let n = self.graph.n_states();
        let entry_arcs: Vec<ArcId> = self.graph.arcs_from(o).to_vec();
        let q_scale = entry_arcs
            .iter()
            .map(|&a| self.entry_vals[a])
            .fold(0.0f64, f64::max);
        if q_scale <= 0.0 {
            return Err(Error::Unreachable { origin: o, dest: d });
        }
        let mut q = vec![0.0; n];
        for &a in &entry_arcs {
            q[a] = self.entry_vals[a] / q_scale;
        }
        let mut partition = 0.0;
        for &a in &entry_arcs {
            partition += q[a] * z[a];
        }
        if !(partition > 0.0) || !partition.is_finite() {
            return Err(Error::Unreachable { origin: o, dest: d });
        }
        let y = self.lu.solve_transpose(&q);

        let mut grad = ParamGrad::zeros(n);
        for &a in &entry_arcs {
            let coef = q[a] * z[a];
            for k in 0..N_FEATURES {
                grad.b[k] += coef * feats.entry[a][k];
            }
            grad.t[a] += coef * params.tt_weight(self.graph.arc_class(a));
        }
        for src in 0..n {
            let ys = y[src];
            if ys == 0.0 {
                continue;
            }
            for (t, tr) in self.graph.range_from(src).zip(self.graph.transitions_from(src)) {
                let coef = ys * self.m_vals[t] * z[tr.to];
                if coef == 0.0 {
                    continue;
                }
                for k in 0..N_FEATURES {
                    grad.b[k] += coef * feats.trans[t][k];
                }
                grad.t[tr.to] += coef * params.tt_weight(self.graph.arc_class(tr.to));
            }
        }
        grad.scale(1.0 / partition);
        Ok((partition.ln() + q_scale.ln(), grad))
    }

    /// Path utility together with its gradient in (b, T).
    pub fn path_utility_grad(
        &self,
        feats: &Features,
        params: &ChoiceParams,
        path: &[ArcId],
    ) -> Result<(f64, ParamGrad)> {
        validate_nonempty(path, self.graph.n_states())?;
        let n = self.graph.n_states();
        let mut grad = ParamGrad::zeros(n);
        let mut v = self.utils.entry[path[0]];
        for k in 0..N_FEATURES {
            grad.b[k] += feats.entry[path[0]][k];
        }
        grad.t[path[0]] += params.tt_weight(self.graph.arc_class(path[0]));
        for w in path.windows(2) {
            let t = self.transition_between(w[0], w[1])?;
            v += self.utils.trans[t];
            for k in 0..N_FEATURES {
                grad.b[k] += feats.trans[t][k];
            }
            grad.t[w[1]] += params.tt_weight(self.graph.arc_class(w[1]));
        }
        Ok((v, grad))
    }

    /// Log-probability of a path and its gradient in (b, T).
    pub fn grad_path_loglik(
        &self,
        feats: &Features,
        params: &ChoiceParams,
        path: &[ArcId],
        o: NodeId,
        d: NodeId,
    ) -> Result<(f64, ParamGrad)> {
        self.check_endpoints(path, o, d)?;
        let (v, mut grad) = self.path_utility_grad(feats, params, path)?;
        let (w, wgrad) = self.origin_value_grad(feats, params, o, d)?;
        grad.add_scaled(&wgrad, -1.0);
        Ok((v - w, grad))
    }
}

fn validate_nonempty(path: &[ArcId], n_states: usize) -> Result<()> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty path".into()));
    }
    if let Some(&bad) = path.iter().find(|&&a| a >= n_states) {
        return Err(Error::InvalidInput(format!("path uses nonexistent arc {bad}")));
    }
    Ok(())
}

/// Gradient over the model parameters: the five feature weights and the
/// per-arc travel times.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub b: [f64; N_FEATURES],
    pub t: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(n_arcs: usize) -> Self {
        Self {
            b: [0.0; N_FEATURES],
            t: vec![0.0; n_arcs],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.b.iter_mut() {
            *v *= s;
        }
        for v in self.t.iter_mut() {
            *v *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += s * b;
        }
        for (a, b) in self.t.iter_mut().zip(&other.t) {
            *a += s * b;
        }
    }

    /// Zeroes the components of frozen weights.
    pub fn mask_frozen(&mut self, params: &ChoiceParams) {
        for (g, &frozen) in self.b.iter_mut().zip(&params.frozen) {
            if frozen {
                *g = 0.0;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.b
            .iter()
            .chain(self.t.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Default walk cap: 50 times an estimate of the graph diameter in arcs
/// (double BFS sweep), at least 50 steps.
pub fn default_max_steps(graph: &TurnGraph) -> usize {
    let far = |start: NodeId| -> (NodeId, usize) {
        let mut dist = vec![usize::MAX; graph.n_nodes()];
        dist[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        let mut best = (start, 0);
        while let Some(u) = queue.pop_front() {
            for &a in graph.arcs_from(u) {
                let v = graph.arc_head(a);
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if dist[v] > best.1 {
                        best = (v, dist[v]);
                    }
                    queue.push_back(v);
                }
            }
        }
        best
    };
    let (u, _) = far(0);
    let (_, diameter) = far(u);
    (50 * diameter.max(1)).max(50)
}

/// All o-to-d paths of the turn graph, when finitely many and at most
/// `max_paths` of them: `None` when a cycle makes the path set infinite or
/// the cap is exceeded. Only states that can still reach `d` are walked.
pub fn enumerate_paths(
    graph: &TurnGraph,
    o: NodeId,
    d: NodeId,
    max_paths: usize,
) -> Result<Option<Vec<Vec<ArcId>>>> {
    let n = graph.n_states();
    // Backward reachability to d over transitions.
    let mut useful = vec![false; n];
    let mut stack: Vec<ArcId> = (0..n).filter(|&a| graph.arc_head(a) == d).collect();
    let mut reverse: Vec<Vec<ArcId>> = vec![Vec::new(); n];
    for src in 0..n {
        for tr in graph.transitions_from(src) {
            reverse[tr.to].push(src);
        }
    }
    for &a in &stack {
        useful[a] = true;
    }
    while let Some(a) = stack.pop() {
        for &src in &reverse[a] {
            if !useful[src] {
                useful[src] = true;
                stack.push(src);
            }
        }
    }

    let starts: Vec<ArcId> = graph
        .arcs_from(o)
        .iter()
        .copied()
        .filter(|&a| useful[a])
        .collect();
    if starts.is_empty() {
        return Err(Error::Unreachable { origin: o, dest: d });
    }

    let mut paths = Vec::new();
    let mut on_stack = vec![false; n];
    let mut current = Vec::new();
    for a in starts {
        if !walk(
            graph, d, a, &useful, &mut on_stack, &mut current, &mut paths, max_paths,
        ) {
            return Ok(None);
        }
    }
    Ok(Some(paths))
}

#[allow(clippy::too_many_arguments)]
fn walk(
    graph: &TurnGraph,
    d: NodeId,
    a: ArcId,
    useful: &[bool],
    on_stack: &mut [bool],
    current: &mut Vec<ArcId>,
    paths: &mut Vec<Vec<ArcId>>,
    max_paths: usize,
) -> bool {
    if on_stack[a] {
        return false; // cycle: infinitely many paths
    }
    on_stack[a] = true;
    current.push(a);
    let mut ok = true;
    if graph.arc_head(a) == d {
        if paths.len() >= max_paths {
            ok = false;
        } else {
            paths.push(current.clone());
        }
    }
    if ok {
        for tr in graph.transitions_from(a) {
            if useful[tr.to] {
                if !walk(graph, d, tr.to, useful, on_stack, current, paths, max_paths) {
                    ok = false;
                    break;
                }
            }
        }
    }
    current.pop();
    on_stack[a] = false;
    ok
}

#[cfg(test)]
pub(crate) mod test_nets {
    use crate::network::{Arc, ArcClass, Network, Node, NodeKind};

    pub fn node(x: f64, y: f64) -> Node {
        Node {
            x,
            y,
            kind: NodeKind::Plain,
        }
    }

    pub fn arc(tail: usize, head: usize, length_m: f64) -> Arc {
        Arc {
            tail,
            head,
            length_m,
            speed_min: 5.5,
            speed_max: 10.0,
            class: ArcClass::NonResidential,
        }
    }

    /// Two parallel arcs from node 0 to node 1.
    pub fn parallel_pair() -> Network {
        Network::build(
            vec![node(0.0, 0.0), node(1000.0, 0.0)],
            vec![arc(0, 1, 1000.0), arc(0, 1, 1000.0)],
        )
        .unwrap()
    }

    /// o=0 -> m=1 -> d=2 chain.
    pub fn chain3() -> Network {
        Network::build(
            vec![node(0.0, 0.0), node(600.0, 0.0), node(1200.0, 0.0)],
            vec![arc(0, 1, 600.0), arc(1, 2, 600.0)],
        )
        .unwrap()
    }

    /// Diamond: 0 -> {1, 2} -> 3, all arcs 600 m.
    pub fn diamond() -> Network {
        Network::build(
            vec![
                node(0.0, 0.0),
                node(600.0, 600.0),
                node(600.0, -600.0),
                node(1200.0, 0.0),
            ],
            vec![arc(0, 1, 600.0), arc(0, 2, 600.0), arc(1, 3, 600.0), arc(2, 3, 600.0)],
        )
        .unwrap()
    }

    /// Monotone (east/north only) restriction of a rows x cols grid: a DAG
    /// whose o=southwest, d=northeast paths are enumerable.
    pub fn monotone_grid(rows: usize, cols: usize) -> Network {
        let spacing = 600.0;
        let mut nodes = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                nodes.push(node(c as f64 * spacing, r as f64 * spacing));
            }
        }
        let mut arcs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                if c + 1 < cols {
                    arcs.push(arc(id, id + 1, spacing));
                }
                if r + 1 < rows {
                    arcs.push(arc(id, id + cols, spacing));
                }
            }
        }
        Network::build(nodes, arcs).unwrap()
    }
}
