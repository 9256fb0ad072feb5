//! Road-network representation: directed arcs with per-arc speed bounds,
//! compressed-sparse-column adjacency, simplification, the turn-expanded
//! projection with left/u-turn indicators, feature channels, travel-time
//! boxes, shortest paths, and a synthetic grid generator.

use std::collections::BinaryHeap;
use std::io::{BufRead, Write as IoWrite};

use crate::{Error, Result};

pub type NodeId = usize;
pub type ArcId = usize;

/// Number of utility feature channels.
pub const N_FEATURES: usize = 5;
/// Travel time on non-residential arcs, minutes.
pub const F_TT_NONRES: usize = 0;
/// Travel time on residential arcs, minutes.
pub const F_TT_RES: usize = 1;
/// Transition crosses a controlled intersection.
pub const F_CONTROL: usize = 2;
/// Transition is a left turn.
pub const F_LEFT: usize = 3;
/// Transition is a u-turn.
pub const F_UTURN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Plain,
    /// Red light, stop sign, or other intersection control.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcClass {
    NonResidential,
    Residential,
}

impl ArcClass {
    /// Feature channel carrying this class's travel time.
    pub fn tt_channel(self) -> usize {
        match self {
            ArcClass::NonResidential => F_TT_NONRES,
            ArcClass::Residential => F_TT_RES,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub length_m: f64,
    /// Slowest plausible traversal speed, m/s.
    pub speed_min: f64,
    /// Legal maximum speed, m/s.
    pub speed_max: f64,
    pub class: ArcClass,
}

/// Directed road network. Arcs keep their insertion order; all downstream
/// indexing (travel-time vectors, features, serialized tables) relies on it.
/// Parallel arcs between one node pair are legal.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    /// Column pointers over nodes; column j spans the arcs leaving node j.
    out_ptr: Vec<usize>,
    /// Arc ids grouped by tail node, insertion order within a column.
    out_arcs: Vec<ArcId>,
}

impl Network {
    pub fn build(nodes: Vec<Node>, arcs: Vec<Arc>) -> Result<Self> {
        if arcs.is_empty() {
            return Err(Error::InvalidNetwork("graph has no arcs".into()));
        }
        let n = nodes.len();
        for (i, a) in arcs.iter().enumerate() {
            if a.tail >= n || a.head >= n {
                return Err(Error::InvalidNetwork(format!(
                    "arc {i} references node outside 0..{n}"
                )));
            }
            if a.tail == a.head {
                return Err(Error::InvalidNetwork(format!("arc {i} is a self-loop")));
            }
            if !(a.length_m > 0.0) || !a.length_m.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "arc {i} has nonpositive length {}",
                    a.length_m
                )));
            }
            if !(a.speed_min > 0.0) || !(a.speed_max >= a.speed_min) {
                return Err(Error::InvalidNetwork(format!(
                    "arc {i} has invalid speed bounds [{}, {}]",
                    a.speed_min, a.speed_max
                )));
            }
        }
        // Counting sort by tail keeps insertion order inside each column.
        let mut out_ptr = vec![0usize; n + 1];
        for a in &arcs {
            out_ptr[a.tail + 1] += 1;
        }
        for j in 0..n {
            out_ptr[j + 1] += out_ptr[j];
        }
        let mut fill = out_ptr.clone();
        let mut out_arcs = vec![0usize; arcs.len()];
        for (id, a) in arcs.iter().enumerate() {
            out_arcs[fill[a.tail]] = id;
            fill[a.tail] += 1;
        }
        Ok(Self {
            nodes,
            arcs,
            out_ptr,
            out_arcs,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Arcs leaving `node`, insertion order.
    pub fn out_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.out_arcs[self.out_ptr[node]..self.out_ptr[node + 1]]
    }

    /// Lowest-id arc from `tail` to `head`, if any. With parallel arcs the
    /// lowest id wins, which makes node-sequence paths resolve
    /// deterministically.
    pub fn find_arc(&self, tail: NodeId, head: NodeId) -> Option<ArcId> {
        self.out_arcs(tail)
            .iter()
            .copied()
            .filter(|&a| self.arcs[a].head == head)
            .min()
    }

    /// Resolves a node sequence to the arc sequence it traverses.
    pub fn resolve_node_path(&self, nodes: &[NodeId]) -> Result<Vec<ArcId>> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(
                "a path needs at least two nodes".into(),
            ));
        }
        nodes
            .windows(2)
            .map(|w| {
                self.find_arc(w[0], w[1]).ok_or_else(|| {
                    Error::InvalidInput(format!("no arc from node {} to node {}", w[0], w[1]))
                })
            })
            .collect()
    }

    /// Largest-city speed limit, m/s: the max over arc speed limits.
    pub fn max_speed(&self) -> f64 {
        self.arcs
            .iter()
            .map(|a| a.speed_max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn save<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},{}", self.nodes.len(), self.arcs.len())?;
        for (id, n) in self.nodes.iter().enumerate() {
            let kind = match n.kind {
                NodeKind::Plain => "plain",
                NodeKind::Control => "control",
            };
            writeln!(w, "{},{},{},{}", id, n.x, n.y, kind)?;
        }
        for a in &self.arcs {
            let class = match a.class {
                ArcClass::NonResidential => "nonres",
                ArcClass::Residential => "res",
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                a.tail, a.head, a.length_m, a.speed_min, a.speed_max, class
            )?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })
            .and_then(|(i, l)| Ok((i + 1, l?)))?;
        let mut it = header.split(',');
        let n_nodes: usize = parse_field(&mut it, ln, "node count")?;
        let n_arcs: usize = parse_field(&mut it, ln, "arc count")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for want in 0..n_nodes {
            let (ln, line) = next_record(&mut lines, "node record")?;
            let mut it = line.split(',');
            let id: usize = parse_field(&mut it, ln, "node id")?;
            if id != want {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("node id {id} out of order, expected {want}"),
                });
            }
            let x: f64 = parse_field(&mut it, ln, "x")?;
            let y: f64 = parse_field(&mut it, ln, "y")?;
            let kind = match it.next() {
                Some("plain") => NodeKind::Plain,
                Some("control") => NodeKind::Control,
                other => {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("unknown node kind {other:?}"),
                    })
                }
            };
            nodes.push(Node { x, y, kind });
        }
        let mut arcs = Vec::with_capacity(n_arcs);
        for _ in 0..n_arcs {
            let (ln, line) = next_record(&mut lines, "arc record")?;
            let mut it = line.split(',');
            let tail: usize = parse_field(&mut it, ln, "tail")?;
            let head: usize = parse_field(&mut it, ln, "head")?;
            let length_m: f64 = parse_field(&mut it, ln, "length")?;
            let speed_min: f64 = parse_field(&mut it, ln, "speed_min")?;
            let speed_max: f64 = parse_field(&mut it, ln, "speed_max")?;
            let class = match it.next() {
                Some("nonres") => ArcClass::NonResidential,
                Some("res") => ArcClass::Residential,
                other => {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("unknown arc class {other:?}"),
                    })
                }
            };
            arcs.push(Arc {
                tail,
                head,
                length_m,
                speed_min,
                speed_max,
                class,
            });
        }
        Self::build(nodes, arcs)
    }
}

fn next_record<I: Iterator<Item = (usize, std::io::Result<String>)>>(
    lines: &mut I,
    what: &str,
) -> Result<(usize, String)> {
    match lines.next() {
        Some((i, l)) => Ok((i + 1, l?)),
        None => Err(Error::Parse {
            line: 0,
            msg: format!("missing {what}"),
        }),
    }
}

fn parse_field<'a, T: std::str::FromStr>(
    it: &mut impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<T> {
    let raw = it.next().ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what}: {raw:?}"),
    })
}

/// Per-arc travel-time box in minutes.
#[derive(Debug, Clone)]
pub struct TravelTimeBounds {
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
}

impl TravelTimeBounds {
    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.t_min.len()
            && t.iter()
                .zip(self.t_min.iter().zip(&self.t_max))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// Per-arc time box `[L/speed_max, L/floor_speed]` in minutes. Arc speed
/// limits are clamped into `[floor_speed, city_speed_max]` first, so a
/// posted limit above the city-wide cap (or below the floor) never widens
/// the box the wrong way.
pub fn travel_time_bounds(
    net: &Network,
    city_speed_max: f64,
    floor_speed: f64,
) -> Result<TravelTimeBounds> {
    if !(floor_speed > 0.0) {
        return Err(Error::InvalidInput(format!(
            "floor speed must be positive, got {floor_speed}"
        )));
    }
    if city_speed_max < floor_speed {
        return Err(Error::InvalidInput(
            "city speed limit below the floor speed".into(),
        ));
    }
    let mut t_min = Vec::with_capacity(net.n_arcs());
    let mut t_max = Vec::with_capacity(net.n_arcs());
    for a in net.arcs() {
        let v = a.speed_max.clamp(floor_speed, city_speed_max);
        t_min.push(a.length_m / v / 60.0);
        t_max.push(a.length_m / floor_speed / 60.0);
    }
    Ok(TravelTimeBounds { t_min, t_max })
}

struct HeapItem {
    dist: f64,
    node: NodeId,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance via reversed comparison; ties on node id.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then(other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Node-to-destination times for every node, by Dijkstra on the reversed
/// graph. Unreachable nodes hold infinity.
pub fn times_to_destination(net: &Network, t: &[f64], d: NodeId) -> Vec<f64> {
    let n = net.n_nodes();
    let mut in_arcs: Vec<Vec<ArcId>> = vec![Vec::new(); n];
    for (id, a) in net.arcs().iter().enumerate() {
        in_arcs[a.head].push(id);
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[d] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem { dist: 0.0, node: d });
    while let Some(HeapItem { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &a in &in_arcs[u] {
            let arc = net.arc(a);
            let nd = du + t[a];
            if nd < dist[arc.tail] {
                dist[arc.tail] = nd;
                heap.push(HeapItem {
                    dist: nd,
                    node: arc.tail,
                });
            }
        }
    }
    dist
}

/// Minimal-total-time path from `o` to `d` under per-arc times `t`
/// (minutes). Ties between equal-time paths break toward the smallest
/// lexicographic node sequence.
pub fn shortest_path(
    net: &Network,
    t: &[f64],
    o: NodeId,
    d: NodeId,
) -> Result<(Vec<ArcId>, f64)> {
    if o == d {
        return Err(Error::InvalidInput(
            "origin equals destination in shortest path".into(),
        ));
    }
    assert_eq!(t.len(), net.n_arcs());
    let dist = times_to_destination(net, t, d);
    if !dist[o].is_finite() {
        return Err(Error::Unreachable { origin: o, dest: d });
    }
    let mut path = Vec::new();
    let mut u = o;
    while u != d {
        let tol = 1e-12 * (1.0 + dist[u].abs());
        // Optimal continuations, then the smallest head node (and smallest
        // arc id among parallels) for the lexicographic tie-break.
        let next = net
            .out_arcs(u)
            .iter()
            .copied()
            .filter(|&a| {
                let arc = net.arc(a);
                (t[a] + dist[arc.head] - dist[u]).abs() <= tol
            })
            .min_by(|&a, &b| {
                let (ha, hb) = (net.arc(a).head, net.arc(b).head);
                ha.cmp(&hb).then(a.cmp(&b))
            })
            .expect("finite distance implies an optimal outgoing arc");
        path.push(next);
        u = net.arc(next).head;
    }
    let total = path.iter().map(|&a| t[a]).sum();
    Ok((path, total))
}

/// What `simplify_network` did, by rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimplifyReport {
    pub controls_demoted: usize,
    pub nodes_bypassed: usize,
    pub arcs_split: usize,
    pub nodes_dropped_off_component: usize,
}

/// Simplifies a network to a fixed point: control nodes with another
/// control within 100 m along the graph are demoted to plain; plain
/// pass-through nodes are bypassed when the merged arc stays within 100 m;
/// arcs longer than 200 m are split at their midpoint; finally only the
/// largest weakly connected component is kept. Dead ends survive.
pub fn simplify_network(net: &Network) -> Result<(Network, SimplifyReport)> {
    const BYPASS_MAX_M: f64 = 100.0;
    const SPLIT_OVER_M: f64 = 200.0;
    const CONTROL_NEAR_M: f64 = 100.0;

    let mut nodes: Vec<Option<Node>> = net.nodes().iter().copied().map(Some).collect();
    let mut arcs: Vec<Option<Arc>> = net.arcs().iter().copied().map(Some).collect();
    let mut report = SimplifyReport::default();

    loop {
        let mut changed = false;

        // Demote clustered controls so the pass-through rule can reach them.
        let demote = clustered_controls(&nodes, &arcs, CONTROL_NEAR_M);
        for id in demote {
            nodes[id].as_mut().unwrap().kind = NodeKind::Plain;
            report.controls_demoted += 1;
            changed = true;
        }

        // Bypass plain pass-through nodes.
        let (mut out, mut inc) = adjacency(&nodes, &arcs);
        for m in 0..nodes.len() {
            let node = match nodes[m] {
                Some(n) if n.kind == NodeKind::Plain => n,
                _ => continue,
            };
            let _ = node;
            if let Some(merges) = bypass_merges(m, &out, &inc, &arcs, BYPASS_MAX_M) {
                let mut skip = false;
                for &(from, to, _, _) in &merges {
                    if out[from].iter().any(|&a| arcs[a].unwrap().head == to) {
                        skip = true; // would duplicate an existing arc
                    }
                }
                if skip {
                    continue;
                }
                let touched: Vec<ArcId> = out[m].iter().chain(inc[m].iter()).copied().collect();
                for a in touched {
                    let arc = arcs[a].take().unwrap();
                    detach(&mut out, &mut inc, a, &arc);
                }
                for (from, to, length_m, template) in merges {
                    let id = arcs.len();
                    let arc = Arc {
                        tail: from,
                        head: to,
                        length_m,
                        ..template
                    };
                    arcs.push(Some(arc));
                    out[from].push(id);
                    inc[to].push(id);
                }
                nodes[m] = None;
                report.nodes_bypassed += 1;
                changed = true;
            }
        }

        // Split overlong arcs at their geometric midpoint.
        for a in 0..arcs.len() {
            let arc = match arcs[a] {
                Some(arc) if arc.length_m > SPLIT_OVER_M => arc,
                _ => continue,
            };
            let (t, h) = (nodes[arc.tail].unwrap(), nodes[arc.head].unwrap());
            let mid = nodes.len();
            nodes.push(Some(Node {
                x: 0.5 * (t.x + h.x),
                y: 0.5 * (t.y + h.y),
                kind: NodeKind::Plain,
            }));
            arcs[a] = None;
            arcs.push(Some(Arc {
                head: mid,
                length_m: 0.5 * arc.length_m,
                ..arc
            }));
            arcs.push(Some(Arc {
                tail: mid,
                length_m: 0.5 * arc.length_m,
                ..arc
            }));
            report.arcs_split += 1;
            changed = true;
        }

        if !changed {
            break;
        }
    }

    report.nodes_dropped_off_component = retain_largest_component(&mut nodes, &mut arcs);
    compact(nodes, arcs).map(|n| (n, report))
}

/// Control nodes with another control within `radius` meters along the
/// graph (arc lengths, direction ignored).
fn clustered_controls(nodes: &[Option<Node>], arcs: &[Option<Arc>], radius: f64) -> Vec<NodeId> {
    let controls: Vec<NodeId> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i], Some(n) if n.kind == NodeKind::Control))
        .collect();
    if controls.len() < 2 {
        return Vec::new();
    }
    let mut undirected: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); nodes.len()];
    for arc in arcs.iter().flatten() {
        undirected[arc.tail].push((arc.head, arc.length_m));
        undirected[arc.head].push((arc.tail, arc.length_m));
    }
    let mut out = Vec::new();
    for &c in &controls {
        // Bounded Dijkstra from c; stop as soon as another control appears.
        let mut dist = std::collections::HashMap::new();
        dist.insert(c, 0.0f64);
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: c });
        let mut near = false;
        'search: while let Some(HeapItem { dist: du, node: u }) = heap.pop() {
            if du > dist[&u] {
                continue;
            }
            for &(v, len) in &undirected[u] {
                let nd = du + len;
                if nd > radius {
                    continue;
                }
                if dist.get(&v).map_or(true, |&old| nd < old) {
                    dist.insert(v, nd);
                    if v != c && nodes[v].map_or(false, |n| n.kind == NodeKind::Control) {
                        near = true;
                        break 'search;
                    }
                    heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
        if near {
            out.push(c);
        }
    }
    out
}

fn adjacency(
    nodes: &[Option<Node>],
    arcs: &[Option<Arc>],
) -> (Vec<Vec<ArcId>>, Vec<Vec<ArcId>>) {
    let mut out = vec![Vec::new(); nodes.len()];
    let mut inc = vec![Vec::new(); nodes.len()];
    for (id, arc) in arcs.iter().enumerate() {
        if let Some(a) = arc {
            out[a.tail].push(id);
            inc[a.head].push(id);
        }
    }
    (out, inc)
}

fn detach(out: &mut [Vec<ArcId>], inc: &mut [Vec<ArcId>], id: ArcId, arc: &Arc) {
    out[arc.tail].retain(|&x| x != id);
    inc[arc.head].retain(|&x| x != id);
}

/// If `m` is a pass-through between two distinct neighbors (one-way chain
/// or two-way street) whose merged arcs stay within `max_len`, the merged
/// arcs to create: (tail, head, length, attribute template).
fn bypass_merges(
    m: NodeId,
    out: &[Vec<ArcId>],
    inc: &[Vec<ArcId>],
    arcs: &[Option<Arc>],
    max_len: f64,
) -> Option<Vec<(NodeId, NodeId, f64, Arc)>> {
    let get = |id: ArcId| arcs[id].unwrap();
    match (inc[m].len(), out[m].len()) {
        (1, 1) => {
            let (ain, aout) = (get(inc[m][0]), get(out[m][0]));
            let (a, b) = (ain.tail, aout.head);
            if a == b || a == m || b == m {
                return None;
            }
            let len = ain.length_m + aout.length_m;
            (len <= max_len).then(|| vec![(a, b, len, merged_attrs(&ain, &aout))])
        }
        (2, 2) => {
            let (i0, i1) = (get(inc[m][0]), get(inc[m][1]));
            let (a, b) = (i0.tail, i1.tail);
            if a == b || a == m || b == m {
                return None;
            }
            let heads: Vec<NodeId> = out[m].iter().map(|&x| get(x).head).collect();
            if !(heads.contains(&a) && heads.contains(&b)) {
                return None;
            }
            let out_to = |n: NodeId| out[m].iter().map(|&x| get(x)).find(|x| x.head == n).unwrap();
            let (oa, ob) = (out_to(a), out_to(b));
            let fwd = i0.length_m + ob.length_m; // a -> m -> b
            let bwd = i1.length_m + oa.length_m; // b -> m -> a
            (fwd <= max_len && bwd <= max_len).then(|| {
                vec![
                    (a, b, fwd, merged_attrs(&i0, &ob)),
                    (b, a, bwd, merged_attrs(&i1, &oa)),
                ]
            })
        }
        _ => None,
    }
}

/// Attributes for a merged arc. Speeds are length-weighted harmonic means,
/// so the merged free-flow time equals the sum of the parts'; the class
/// follows the longer part.
fn merged_attrs(first: &Arc, second: &Arc) -> Arc {
    let total = first.length_m + second.length_m;
    let harmonic = |v1: f64, v2: f64| total / (first.length_m / v1 + second.length_m / v2);
    Arc {
        tail: 0,
        head: 0,
        length_m: total,
        speed_min: harmonic(first.speed_min, second.speed_min),
        speed_max: harmonic(first.speed_max, second.speed_max),
        class: if second.length_m > first.length_m {
            second.class
        } else {
            first.class
        },
    }
}

/// Drops every node and arc outside the largest weakly connected
/// component (ties to the component with the smallest node id). Returns
/// the number of nodes dropped.
fn retain_largest_component(nodes: &mut [Option<Node>], arcs: &mut [Option<Arc>]) -> usize {
    let n = nodes.len();
    let mut comp = vec![usize::MAX; n];
    let mut undirected: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for arc in arcs.iter().flatten() {
        undirected[arc.tail].push(arc.head);
        undirected[arc.head].push(arc.tail);
    }
    let mut next = 0;
    for start in 0..n {
        if nodes[start].is_none() || comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(u) = stack.pop() {
            for &v in &undirected[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    if next == 0 {
        return 0;
    }
    let mut sizes = vec![0usize; next];
    for i in 0..n {
        if nodes[i].is_some() {
            sizes[comp[i]] += 1;
        }
    }
    let keep = (0..next).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
    let mut dropped = 0;
    for i in 0..n {
        if nodes[i].is_some() && comp[i] != keep {
            nodes[i] = None;
            dropped += 1;
        }
    }
    for slot in arcs.iter_mut() {
        if let Some(a) = slot {
            if comp[a.tail] != keep {
                *slot = None;
            }
        }
    }
    dropped
}

/// Renumbers surviving nodes in ascending old-id order and rebuilds.
fn compact(nodes: Vec<Option<Node>>, arcs: Vec<Option<Arc>>) -> Result<Network> {
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut new_nodes = Vec::new();
    for (old, n) in nodes.into_iter().enumerate() {
        if let Some(n) = n {
            remap[old] = new_nodes.len();
            new_nodes.push(n);
        }
    }
    let new_arcs: Vec<Arc> = arcs
        .into_iter()
        .flatten()
        .map(|a| Arc {
            tail: remap[a.tail],
            head: remap[a.head],
            ..a
        })
        .collect();
    Network::build(new_nodes, new_arcs)
}

/// One transition of the turn-expanded graph: entering `to` directly after
/// the transition's source arc.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub to: ArcId,
    pub left: bool,
    pub uturn: bool,
    pub control: bool,
}

/// Turn-expanded projection: states are the original arcs, transitions are
/// consecutive arc pairs, stored column-wise by source arc.
#[derive(Debug, Clone)]
pub struct TurnGraph {
    out_ptr: Vec<usize>,
    trans: Vec<Transition>,
    arc_tail: Vec<NodeId>,
    arc_head: Vec<NodeId>,
    arc_class: Vec<ArcClass>,
    node_out_ptr: Vec<usize>,
    node_out_arcs: Vec<ArcId>,
}

impl TurnGraph {
    pub fn n_states(&self) -> usize {
        self.arc_tail.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.trans.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_out_ptr.len() - 1
    }

    /// Arcs leaving `node`: the legal first arcs of a trip starting there.
    pub fn arcs_from(&self, node: NodeId) -> &[ArcId] {
        &self.node_out_arcs[self.node_out_ptr[node]..self.node_out_ptr[node + 1]]
    }

    /// Transitions leaving arc-state `a`.
    pub fn transitions_from(&self, a: ArcId) -> &[Transition] {
        &self.trans[self.out_ptr[a]..self.out_ptr[a + 1]]
    }

    /// Index range of `transitions_from(a)` within the flat transition
    /// arrays (utilities, features).
    pub fn range_from(&self, a: ArcId) -> std::ops::Range<usize> {
        self.out_ptr[a]..self.out_ptr[a + 1]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.trans
    }

    /// Source arc of transition index `t`.
    pub fn source_of(&self, t: usize) -> ArcId {
        match self.out_ptr.binary_search(&t) {
            // Pointer values repeat when states have no transitions; take
            // the last column starting at or before t.
            Ok(mut i) => {
                while i + 1 < self.out_ptr.len() && self.out_ptr[i + 1] == t {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        }
    }

    pub fn arc_tail(&self, a: ArcId) -> NodeId {
        self.arc_tail[a]
    }

    pub fn arc_head(&self, a: ArcId) -> NodeId {
        self.arc_head[a]
    }

    pub fn arc_class(&self, a: ArcId) -> ArcClass {
        self.arc_class[a]
    }

    /// Arcs entering destination node `d`.
    pub fn arcs_into(&self, d: NodeId) -> Vec<ArcId> {
        (0..self.n_states()).filter(|&a| self.arc_head[a] == d).collect()
    }

    /// Resolves a node sequence into the arc sequence connecting it,
    /// taking the lowest arc id wherever parallel arcs join a pair.
    pub fn resolve_node_path(&self, nodes: &[NodeId]) -> Result<Vec<ArcId>> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(
                "a node path needs at least two nodes".into(),
            ));
        }
        if let Some(&bad) = nodes.iter().find(|&&v| v >= self.n_nodes()) {
            return Err(Error::InvalidInput(format!(
                "path visits nonexistent node {bad}"
            )));
        }
        nodes
            .windows(2)
            .map(|w| {
                self.arcs_from(w[0])
                    .iter()
                    .copied()
                    .find(|&a| self.arc_head[a] == w[1])
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("no arc from node {} to {}", w[0], w[1]))
                    })
            })
            .collect()
    }
}

/// Builds the turn-expanded graph. A transition is a left turn when the
/// signed heading change is in the open interval (30 deg, 150 deg)
/// counterclockwise; a u-turn when the successor returns to the
/// predecessor's tail. The two are mutually exclusive. A transition
/// crosses a controlled intersection when its shared node carries a
/// control.
pub fn project_turns(net: &Network) -> TurnGraph {
    let n_arcs = net.n_arcs();
    let mut out_ptr = Vec::with_capacity(n_arcs + 1);
    let mut trans = Vec::new();
    out_ptr.push(0);
    for a in 0..n_arcs {
        let arc = net.arc(a);
        let j = arc.head;
        let control = net.node(j).kind == NodeKind::Control;
        let (t, h) = (net.node(arc.tail), net.node(j));
        let dir_in = (h.x - t.x, h.y - t.y);
        for &b in net.out_arcs(j) {
            let next = net.arc(b);
            let uturn = next.head == arc.tail;
            let nh = net.node(next.head);
            let dir_out = (nh.x - h.x, nh.y - h.y);
            let left = !uturn && is_left(dir_in, dir_out);
            trans.push(Transition {
                to: b,
                left,
                uturn,
                control,
            });
        }
        out_ptr.push(trans.len());
    }
    TurnGraph {
        out_ptr,
        trans,
        arc_tail: net.arcs().iter().map(|a| a.tail).collect(),
        arc_head: net.arcs().iter().map(|a| a.head).collect(),
        arc_class: net.arcs().iter().map(|a| a.class).collect(),
        node_out_ptr: net.out_ptr.clone(),
        node_out_arcs: net.out_arcs.clone(),
    }
}

fn is_left(din: (f64, f64), dout: (f64, f64)) -> bool {
    let cross = din.0 * dout.1 - din.1 * dout.0;
    let dot = din.0 * dout.0 + din.1 * dout.1;
    if cross == 0.0 && dot == 0.0 {
        return false; // degenerate geometry
    }
    let deg = cross.atan2(dot).to_degrees();
    deg > 30.0 && deg < 150.0
}

/// Feature channels for the choice model. `trans[t]` holds the channels of
/// transition `t`; `entry[a]` the channels of entering the network on arc
/// `a` at the start of a trip (travel time only, no turn geometry).
#[derive(Debug, Clone)]
pub struct Features {
    pub trans: Vec<[f64; N_FEATURES]>,
    pub entry: Vec<[f64; N_FEATURES]>,
}

/// Builds feature channels from the turn graph and per-arc travel times
/// (minutes). The two travel-time channels partition T by arc class: the
/// entered arc's time lands in its class's channel, the other stays zero,
/// so their sum reconstructs T exactly.
pub fn build_features(tg: &TurnGraph, t: &[f64]) -> Features {
    assert_eq!(t.len(), tg.n_states(), "one travel time per arc");
    let mut trans = Vec::with_capacity(tg.n_transitions());
    for tr in tg.transitions() {
        let mut f = [0.0; N_FEATURES];
        f[tg.arc_class(tr.to).tt_channel()] = t[tr.to];
        f[F_CONTROL] = tr.control as u8 as f64;
        f[F_LEFT] = tr.left as u8 as f64;
        f[F_UTURN] = tr.uturn as u8 as f64;
        trans.push(f);
    }
    let entry = (0..tg.n_states())
        .map(|a| {
            let mut f = [0.0; N_FEATURES];
            f[tg.arc_class(a).tt_channel()] = t[a];
            f
        })
        .collect();
    Features { trans, entry }
}

/// Quadratic travel-time profile of the synthetic grid, seconds, evaluated
/// at position `j` meters along the row axis. Larger toward the middle of
/// the grid: slower arcs there.
pub fn grid_profile_seconds(j: f64) -> f64 {
    let u = (j - 3300.0) / 3300.0;
    60.0 - 3.0 * u * u
}

/// Synthetic rows x cols lattice with bidirectional arcs every `spacing`
/// meters, plus ground-truth per-arc travel times in minutes. Times follow
/// the quadratic profile at the arc midpoint's row coordinate, clamped to
/// the per-arc legal-speed box. Every arc is non-residential with speeds
/// 5.5..10 m/s; every node is plain.
pub fn synthetic_grid(rows: usize, cols: usize, spacing_m: f64) -> Result<(Network, Vec<f64>)> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput(
            "grid needs at least 2 rows and 2 cols".into(),
        ));
    }
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                x: c as f64 * spacing_m,
                y: r as f64 * spacing_m,
                kind: NodeKind::Plain,
            });
        }
    }
    let arc = |tail, head| Arc {
        tail,
        head,
        length_m: spacing_m,
        speed_min: 5.5,
        speed_max: 10.0,
        class: ArcClass::NonResidential,
    };
    let mut arcs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                arcs.push(arc(id, id + 1));
                arcs.push(arc(id + 1, id));
            }
            if r + 1 < rows {
                arcs.push(arc(id, id + cols));
                arcs.push(arc(id + cols, id));
            }
        }
    }
    let net = Network::build(nodes, arcs)?;
    let t_true = net
        .arcs()
        .iter()
        .map(|a| {
            let mid_y = 0.5 * (net.node(a.tail).y + net.node(a.head).y);
            let profile = grid_profile_seconds(mid_y);
            let lo = a.length_m / a.speed_max;
            let hi = a.length_m / a.speed_min;
            profile.clamp(lo, hi) / 60.0
        })
        .collect();
    Ok((net, t_true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(arcs: Vec<Arc>) -> Network {
        let nodes = vec![
            Node { x: 0.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 1000.0, y: 0.0, kind: NodeKind::Plain },
        ];
        Network::build(nodes, arcs).unwrap()
    }

    fn plain_arc(tail: NodeId, head: NodeId, length_m: f64) -> Arc {
        Arc {
            tail,
            head,
            length_m,
            speed_min: 5.5,
            speed_max: 10.0,
            class: ArcClass::NonResidential,
        }
    }

    #[test]
    fn build_accepts_parallel_arcs() {
        let net = two_node(vec![plain_arc(0, 1, 1000.0), plain_arc(0, 1, 1000.0)]);
        assert_eq!(net.n_arcs(), 2);
        assert_eq!(net.out_arcs(0), &[0, 1]);
        assert!(net.out_arcs(1).is_empty());
    }

    #[test]
    fn build_rejects_bad_input() {
        let nodes = vec![Node { x: 0.0, y: 0.0, kind: NodeKind::Plain }];
        match Network::build(nodes.clone(), vec![]) {
            Err(Error::InvalidNetwork(msg)) => assert!(msg.contains("no arcs")),
            other => panic!("expected no-arcs error, got {other:?}"),
        }
        assert!(Network::build(nodes.clone(), vec![plain_arc(0, 3, 10.0)]).is_err());
        let mut bad = plain_arc(0, 0, 10.0);
        bad.head = 0;
        assert!(Network::build(nodes, vec![bad]).is_err());
    }

    #[test]
    fn columns_visit_each_arc_once() {
        let (net, _) = synthetic_grid(4, 5, 600.0).unwrap();
        let mut seen = vec![false; net.n_arcs()];
        for node in 0..net.n_nodes() {
            for &a in net.out_arcs(node) {
                assert!(!seen[a], "arc {a} appeared twice");
                seen[a] = true;
                assert_eq!(net.arc(a).tail, node);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn grid_counts() {
        let (net, t) = synthetic_grid(10, 10, 600.0).unwrap();
        assert_eq!(net.n_nodes(), 100);
        assert_eq!(net.n_arcs(), 360);
        assert_eq!(t.len(), 360);
        let (net2, _) = synthetic_grid(2, 2, 600.0).unwrap();
        assert_eq!(net2.n_nodes(), 4);
        assert_eq!(net2.n_arcs(), 8);
        assert!(synthetic_grid(1, 5, 600.0).is_err());
    }

    #[test]
    fn grid_profile_is_slowest_at_center() {
        assert!(grid_profile_seconds(3300.0) > grid_profile_seconds(0.0));
        assert_eq!(grid_profile_seconds(3300.0), 60.0);
        assert_eq!(grid_profile_seconds(0.0), 57.0);
    }

    #[test]
    fn grid_times_respect_speed_box() {
        let (net, t) = synthetic_grid(10, 10, 600.0).unwrap();
        for (a, &ti) in net.arcs().iter().zip(&t) {
            let lo = a.length_m / a.speed_max / 60.0;
            let hi = a.length_m / a.speed_min / 60.0;
            assert!(ti >= lo - 1e-12 && ti <= hi + 1e-12);
        }
    }

    #[test]
    fn bounds_match_hand_computation() {
        let net = two_node(vec![plain_arc(0, 1, 600.0)]);
        let b = travel_time_bounds(&net, 10.0, 5.5).unwrap();
        assert!((b.t_min[0] - 1.0).abs() < 1e-12);
        assert!((b.t_max[0] - 600.0 / 5.5 / 60.0).abs() < 1e-12);
        let degenerate = travel_time_bounds(&net, 10.0, 10.0).unwrap();
        assert!((degenerate.t_min[0] - degenerate.t_max[0]).abs() < 1e-15);
        assert!(travel_time_bounds(&net, 10.0, 0.0).is_err());
        // Posted limit above the city cap tightens to the cap.
        let capped = travel_time_bounds(&net, 8.0, 5.5).unwrap();
        assert!((capped.t_min[0] - 600.0 / 8.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn shortest_path_picks_quicker_parallel_arc() {
        let net = two_node(vec![plain_arc(0, 1, 1000.0), plain_arc(0, 1, 1000.0)]);
        let (path, time) = shortest_path(&net, &[2.0, 1.0], 0, 1).unwrap();
        assert_eq!(path, vec![1]);
        assert!((time - 1.0).abs() < 1e-12);
        assert!(matches!(
            shortest_path(&net, &[2.0, 1.0], 0, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            shortest_path(&net, &[2.0, 1.0], 1, 0),
            Err(Error::Unreachable { .. })
        ));
    }

    #[test]
    fn shortest_path_tie_break_is_lexicographic() {
        let (net, _) = synthetic_grid(3, 3, 600.0).unwrap();
        let t = vec![1.0; net.n_arcs()];
        let (path, time) = shortest_path(&net, &t, 0, 8).unwrap();
        assert!((time - 4.0).abs() < 1e-12);
        let mut nodes = vec![0];
        for &a in &path {
            nodes.push(net.arc(a).head);
        }
        assert_eq!(nodes, vec![0, 1, 2, 5, 8]);
    }

    #[test]
    fn simplify_bypasses_short_chain() {
        let nodes = vec![
            Node { x: 0.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 40.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 80.0, y: 0.0, kind: NodeKind::Plain },
        ];
        let arcs = vec![plain_arc(0, 1, 40.0), plain_arc(1, 2, 40.0)];
        let (out, report) = simplify_network(&Network::build(nodes, arcs).unwrap()).unwrap();
        assert_eq!(out.n_nodes(), 2);
        assert_eq!(out.n_arcs(), 1);
        assert!((out.arc(0).length_m - 80.0).abs() < 1e-12);
        assert_eq!(report.nodes_bypassed, 1);
    }

    #[test]
    fn simplify_keeps_two_way_street() {
        let nodes = vec![
            Node { x: 0.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 30.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 60.0, y: 0.0, kind: NodeKind::Plain },
        ];
        let arcs = vec![
            plain_arc(0, 1, 30.0),
            plain_arc(1, 0, 30.0),
            plain_arc(1, 2, 30.0),
            plain_arc(2, 1, 30.0),
        ];
        let (out, _) = simplify_network(&Network::build(nodes, arcs).unwrap()).unwrap();
        assert_eq!(out.n_nodes(), 2);
        assert_eq!(out.n_arcs(), 2);
        let lengths: Vec<f64> = out.arcs().iter().map(|a| a.length_m).collect();
        assert!(lengths.iter().all(|&l| (l - 60.0).abs() < 1e-12));
    }

    #[test]
    fn simplify_splits_long_arc() {
        let net = two_node(vec![plain_arc(0, 1, 300.0)]);
        let (out, report) = simplify_network(&net).unwrap();
        assert_eq!(report.arcs_split, 1);
        assert_eq!(out.n_nodes(), 3);
        assert_eq!(out.n_arcs(), 2);
        for a in out.arcs() {
            assert!((a.length_m - 150.0).abs() < 1e-12);
        }
        let mid = out.node(2);
        assert!((mid.x - 500.0).abs() < 1e-12);
    }

    #[test]
    fn simplify_keeps_largest_component() {
        // 5-node chain (spaced to avoid bypassing) and a separate 3-node chain.
        let mut nodes = Vec::new();
        for i in 0..5 {
            nodes.push(Node { x: 200.0 * i as f64, y: 0.0, kind: NodeKind::Plain });
        }
        for i in 0..3 {
            nodes.push(Node { x: 200.0 * i as f64, y: 900.0, kind: NodeKind::Plain });
        }
        let mut arcs = Vec::new();
        for i in 0..4 {
            arcs.push(plain_arc(i, i + 1, 200.0));
        }
        for i in 5..7 {
            arcs.push(plain_arc(i, i + 1, 200.0));
        }
        let (out, report) = simplify_network(&Network::build(nodes, arcs).unwrap()).unwrap();
        assert_eq!(out.n_nodes(), 5);
        assert_eq!(report.nodes_dropped_off_component, 3);
    }

    #[test]
    fn simplify_demotes_clustered_controls() {
        let nodes = vec![
            Node { x: 0.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 40.0, y: 0.0, kind: NodeKind::Control },
            Node { x: 80.0, y: 0.0, kind: NodeKind::Control },
            Node { x: 400.0, y: 0.0, kind: NodeKind::Plain },
        ];
        let arcs = vec![
            plain_arc(0, 1, 40.0),
            plain_arc(1, 2, 40.0),
            plain_arc(2, 3, 320.0),
        ];
        let (out, report) = simplify_network(&Network::build(nodes, arcs).unwrap()).unwrap();
        assert_eq!(report.controls_demoted, 2);
        assert!(out.nodes().iter().all(|n| n.kind == NodeKind::Plain));
    }

    #[test]
    fn simplify_is_idempotent() {
        let (net, _) = synthetic_grid(4, 4, 90.0).unwrap();
        let (once, _) = simplify_network(&net).unwrap();
        let (twice, report) = simplify_network(&once).unwrap();
        assert_eq!(report, SimplifyReport::default());
        assert_eq!(once.n_nodes(), twice.n_nodes());
        assert_eq!(once.n_arcs(), twice.n_arcs());
        let mut a = Vec::new();
        once.save(&mut a).unwrap();
        let mut b = Vec::new();
        twice.save(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn turn_indicators() {
        // Path west->center->{east, north, back}; center is controlled.
        let nodes = vec![
            Node { x: -600.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 0.0, y: 0.0, kind: NodeKind::Control },
            Node { x: 600.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 0.0, y: 600.0, kind: NodeKind::Plain },
        ];
        let arcs = vec![
            plain_arc(0, 1, 600.0), // 0: east into center
            plain_arc(1, 2, 600.0), // 1: continue east
            plain_arc(1, 3, 600.0), // 2: north = left turn
            plain_arc(1, 0, 600.0), // 3: back west = u-turn
        ];
        let net = Network::build(nodes, arcs).unwrap();
        let tg = project_turns(&net);
        let from_entry: Vec<Transition> = tg.transitions_from(0).to_vec();
        assert_eq!(from_entry.len(), 3);
        for tr in &from_entry {
            assert!(tr.control);
            match tr.to {
                1 => assert!(!tr.left && !tr.uturn),
                2 => assert!(tr.left && !tr.uturn),
                3 => assert!(!tr.left && tr.uturn),
                other => panic!("unexpected transition target {other}"),
            }
        }
        for (i, tr) in tg.transitions().iter().enumerate() {
            assert!(!(tr.left && tr.uturn), "transition {i} is both turns");
        }
    }

    #[test]
    fn source_of_inverts_transition_ranges() {
        let (net, _) = synthetic_grid(3, 4, 600.0).unwrap();
        let tg = project_turns(&net);
        for a in 0..tg.n_states() {
            for t in tg.range_from(a) {
                assert_eq!(tg.source_of(t), a);
            }
        }
    }

    #[test]
    fn features_partition_travel_time() {
        let nodes = vec![
            Node { x: 0.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 100.0, y: 0.0, kind: NodeKind::Plain },
            Node { x: 200.0, y: 0.0, kind: NodeKind::Plain },
        ];
        let mut residential = plain_arc(1, 2, 100.0);
        residential.class = ArcClass::Residential;
        let net = Network::build(nodes, vec![plain_arc(0, 1, 100.0), residential]).unwrap();
        let tg = project_turns(&net);
        let t = vec![1.0, 2.0];
        let f = build_features(&tg, &t);
        // Single transition, onto the residential arc.
        assert_eq!(f.trans.len(), 1);
        assert_eq!(f.trans[0][F_TT_RES], 2.0);
        assert_eq!(f.trans[0][F_TT_NONRES], 0.0);
        assert_eq!(f.entry[0][F_TT_NONRES], 1.0);
        assert_eq!(f.entry[1][F_TT_RES], 2.0);
        for (i, tf) in f.trans.iter().enumerate() {
            let to = tg.transitions()[i].to;
            assert_eq!(tf[F_TT_NONRES] + tf[F_TT_RES], t[to]);
        }
    }

    #[test]
    fn feature_sum_reconstructs_t_bitwise_on_grid() {
        let (net, t) = synthetic_grid(5, 5, 600.0).unwrap();
        let tg = project_turns(&net);
        let f = build_features(&tg, &t);
        for (i, tf) in f.trans.iter().enumerate() {
            let to = tg.transitions()[i].to;
            assert_eq!(tf[F_TT_NONRES] + tf[F_TT_RES], t[to]);
        }
        let _ = net;
    }

    #[test]
    fn save_load_round_trips_byte_identical() {
        let (net, _) = synthetic_grid(3, 3, 600.0).unwrap();
        let mut first = Vec::new();
        net.save(&mut first).unwrap();
        let reloaded = Network::load(&first[..]).unwrap();
        let mut second = Vec::new();
        reloaded.save(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(reloaded.n_arcs(), net.n_arcs());
    }

    #[test]
    fn load_reports_line_numbers() {
        let text = "2,1\n0,0,0,plain\n1,600,0,plain\n0,1,not_a_number,5.5,10,nonres\n";
        match Network::load(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
