//! Pose-path optimization over the exemplar trellis.
//!
//! A path picks one exemplar pose per frame. Its energy is the sum of the
//! unary costs (`U`), step-size weights (`T`), speed-change penalties (`V`)
//! and stationary-run penalties (`S`). Consecutive poses must lie in the same
//! or directly neighboring clusters.
//!
//! [`solve_paper_dp`] is the classic per-node recursion that keeps only the
//! best sub-path's history `(u, s)` at each node; it is exact for first-order
//! energies and a heuristic once `V` and `S` are active. [`solve_exact_dp`]
//! carries the history in the state and is exact, and [`brute_force`]
//! enumerates paths for testing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classify::ClusterDistribution;
use crate::clustering::ExemplarBank;
use crate::costs::UnaryCosts;
use crate::error::{Error, Result};

/// `f(x) = mu * x` for `x < gamma`, else `mu * gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedLinear {
    pub gamma: f64,
    pub mu: f64,
}

impl TruncatedLinear {
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.gamma {
            self.mu * x
        } else {
            self.mu * self.gamma
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathParams {
    /// Penalty for backward steps, steps longer than two, and steps across
    /// training-sequence boundaries.
    pub delta: f64,
    pub speed: TruncatedLinear,
    pub stationary: TruncatedLinear,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            speed: TruncatedLinear { gamma: 10.0, mu: 0.01 },
            stationary: TruncatedLinear { gamma: 5.0, mu: 0.02 },
        }
    }
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.delta) && ok(self.speed.mu) && ok(self.stationary.mu)) {
            return Err(Error::InvalidParameter("path penalties must be nonnegative".into()));
        }
        if !(self.speed.gamma >= 1.0 && self.stationary.gamma >= 1.0)
            || !(self.speed.gamma.is_finite() && self.stationary.gamma.is_finite())
        {
            return Err(Error::InvalidParameter("truncation points must be at least 1".into()));
        }
        Ok(())
    }

    /// The same parameters with the second-order terms switched off.
    pub fn first_order(&self) -> Self {
        Self {
            speed: TruncatedLinear { mu: 0.0, ..self.speed },
            stationary: TruncatedLinear { mu: 0.0, ..self.stationary },
            ..*self
        }
    }
}

/// Weight of stepping from bank pose `j` to bank pose `i`.
pub fn step_weight(j: usize, i: usize, bank: &ExemplarBank, params: &PathParams) -> f64 {
    if !bank.are_neighbors(bank.cluster_of(j), bank.cluster_of(i)) {
        return f64::INFINITY;
    }
    let step = i as i64 - j as i64;
    if (0..=2).contains(&step) && !bank.crosses_break(j, i) {
        0.0
    } else {
        params.delta
    }
}

/// Penalty for changing step size from `prev_speed` to `step`.
pub fn speed_term(prev_speed: i64, step: i64, params: &PathParams) -> f64 {
    params.speed.eval((prev_speed - step).unsigned_abs() as f64)
}

/// Penalty for staying on pose `j` after `u_prev` stationary steps.
pub fn stationary_term(u_prev: u64, j: usize, i: usize, params: &PathParams) -> f64 {
    if i != j {
        0.0
    } else {
        params.stationary.eval((u_prev + 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrellisNode {
    pub pose: usize,
    pub cost: f64,
}

/// Candidate exemplar poses per frame, sorted by pose index.
#[derive(Debug, Clone)]
pub struct Trellis<'a> {
    bank: &'a ExemplarBank,
    frames: Vec<Vec<TrellisNode>>,
}

impl<'a> Trellis<'a> {
    pub fn new(bank: &'a ExemplarBank, frames: Vec<Vec<TrellisNode>>) -> Result<Self> {
        let mut frames = frames;
        for (n, f) in frames.iter_mut().enumerate() {
            if f.is_empty() {
                return Err(Error::Infeasible { frame: n });
            }
            f.sort_by_key(|node| node.pose);
            if f.windows(2).any(|w| w[0].pose == w[1].pose) {
                return Err(Error::InvalidParameter(format!("duplicate pose at frame {n}")));
            }
            if let Some(bad) = f.iter().find(|node| node.pose >= bank.len()) {
                return Err(Error::InvalidParameter(format!(
                    "pose {} out of range at frame {n}",
                    bad.pose
                )));
            }
            if f.iter().any(|node| !node.cost.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite cost at frame {n}")));
            }
        }
        Ok(Self { bank, frames })
    }

    pub fn from_costs(bank: &'a ExemplarBank, costs: &UnaryCosts) -> Result<Self> {
        let frames = costs
            .frames()
            .iter()
            .map(|f| f.iter().map(|&(pose, cost)| TrellisNode { pose, cost }).collect())
            .collect();
        Self::new(bank, frames)
    }

    pub fn bank(&self) -> &'a ExemplarBank {
        self.bank
    }

    pub fn frames(&self) -> &[Vec<TrellisNode>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cost(&self, frame: usize, pose: usize) -> Option<f64> {
        let f = &self.frames[frame];
        f.binary_search_by_key(&pose, |node| node.pose)
            .ok()
            .map(|k| f[k].cost)
    }

    /// Keeps only the nodes accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(usize, &TrellisNode) -> bool) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(n, f)| f.iter().copied().filter(|node| keep(n, node)).collect())
            .collect();
        Self::new(self.bank, frames)
    }

    /// Node indices of each frame grouped by cluster.
    fn by_cluster(&self, frame: usize) -> HashMap<usize, Vec<usize>> {
        let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, node) in self.frames[frame].iter().enumerate() {
            out.entry(self.bank.cluster_of(node.pose)).or_default().push(k);
        }
        out
    }
}

/// Energy decomposition of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    #[serde(rename = "U")]
    pub unary: f64,
    #[serde(rename = "T")]
    pub step: f64,
    #[serde(rename = "V")]
    pub speed: f64,
    #[serde(rename = "S")]
    pub stationary: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosePath {
    pub indices: Vec<usize>,
    pub energy: Energy,
}

/// Evaluates `U + T + V + S` along a realized path.
pub fn energy_of_path(path: &[usize], tr: &Trellis, params: &PathParams) -> Result<Energy> {
    if path.len() != tr.len() {
        return Err(Error::LengthMismatch {
            what: "path",
            expected: tr.len(),
            actual: path.len(),
        });
    }
    let mut e = Energy {
        unary: 0.0,
        step: 0.0,
        speed: 0.0,
        stationary: 0.0,
        total: 0.0,
    };
    let mut speed = 0i64;
    let mut still = 0u64;
    for (n, &i) in path.iter().enumerate() {
        e.unary += tr.cost(n, i).ok_or(Error::InfeasiblePath {
            frame: n,
            reason: "pose is not a trellis candidate",
        })?;
        if n == 0 {
            continue;
        }
        let j = path[n - 1];
        let w = step_weight(j, i, tr.bank(), params);
        if !w.is_finite() {
            return Err(Error::InfeasiblePath {
                frame: n,
                reason: "step between non-neighboring clusters",
            });
        }
        let step = i as i64 - j as i64;
        e.step += w;
        e.speed += speed_term(speed, step, params);
        e.stationary += stationary_term(still, j, i, params);
        still = if i == j { still + 1 } else { 0 };
        speed = step;
    }
    e.total = e.unary + e.step + e.speed + e.stationary;
    Ok(e)
}

fn finish(indices: Vec<usize>, tr: &Trellis, params: &PathParams) -> Result<PosePath> {
    let energy = energy_of_path(&indices, tr, params)?;
    Ok(PosePath { indices, energy })
}

/// Per-node state of the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    /// Best accumulated energy of a path ending here.
    pub h: f64,
    /// Stationary steps at the end of that path.
    pub u: u64,
    /// Last step size of that path.
    pub s: i64,
    /// Predecessor node index in the previous frame; `None` at frame 0.
    pub p: Option<usize>,
}

/// The single-history recursion: each node keeps the `(u, s)` of its best
/// incoming sub-path. Ties prefer the smaller pose index.
pub fn solve_paper_dp(tr: &Trellis, params: &PathParams) -> Result<PosePath> {
    let states = paper_dp_states(tr, params)?;
    let last = states.last().expect("trellis has frames");
    let mut at = best_final(tr.frames.last().unwrap(), last.iter().map(|s| s.h));
    let mut indices = vec![0; tr.len()];
    for n in (0..tr.len()).rev() {
        indices[n] = tr.frames[n][at].pose;
        if let Some(p) = states[n][at].p {
            at = p;
        }
    }
    let path = finish(indices, tr, params)?;
    debug_assert!(
        (path.energy.total - last.iter().map(|s| s.h).fold(f64::INFINITY, f64::min)).abs()
            <= 1e-9 * path.energy.total.max(1.0)
    );
    Ok(path)
}

/// Runs the recursion and returns every node's final state.
pub fn paper_dp_states(tr: &Trellis, params: &PathParams) -> Result<Vec<Vec<NodeState>>> {
    params.validate()?;
    if tr.is_empty() {
        return Err(Error::Infeasible { frame: 0 });
    }
    let bank = tr.bank();
    let mut states: Vec<Vec<NodeState>> = Vec::with_capacity(tr.len());
    states.push(
        tr.frames[0]
            .iter()
            .map(|node| NodeState {
                h: node.cost,
                u: 0,
                s: 0,
                p: None,
            })
            .collect(),
    );
    for n in 1..tr.len() {
        let prev = &states[n - 1];
        let prev_nodes = &tr.frames[n - 1];
        let groups = tr.by_cluster(n - 1);
        let mut cur = Vec::with_capacity(tr.frames[n].len());
        for node in &tr.frames[n] {
            let i = node.pose;
            let mut best: Option<(f64, usize, usize)> = None;
            for &nc in bank.neighbors(bank.cluster_of(i)) {
                let Some(members) = groups.get(&nc) else { continue };
                for &k in members {
                    let st = &prev[k];
                    if !st.h.is_finite() {
                        continue;
                    }
                    let j = prev_nodes[k].pose;
                    let cand = st.h
                        + step_weight(j, i, bank, params)
                        + speed_term(st.s, i as i64 - j as i64, params)
                        + stationary_term(st.u, j, i, params);
                    let better = match best {
                        None => cand.is_finite(),
                        Some((h, bj, _)) => cand < h || (cand == h && j < bj),
                    };
                    if better {
                        best = Some((cand, j, k));
                    }
                }
            }
            cur.push(match best {
                Some((h, j, k)) => NodeState {
                    h: h + node.cost,
                    u: if j == i { prev[k].u + 1 } else { 0 },
                    s: i as i64 - j as i64,
                    p: Some(k),
                },
                None => NodeState {
                    h: f64::INFINITY,
                    u: 0,
                    s: 0,
                    p: None,
                },
            });
        }
        if cur.iter().all(|s| !s.h.is_finite()) {
            return Err(Error::Infeasible { frame: n });
        }
        states.push(cur);
    }
    Ok(states)
}

fn best_final(nodes: &[TrellisNode], h: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::INFINITY, usize::MAX, 0);
    for (k, hv) in h.enumerate() {
        let pose = nodes[k].pose;
        if hv < best.0 || (hv == best.0 && pose < best.1) {
            best = (hv, pose, k);
        }
    }
    best.2
}

/// Upper limit on augmented states in one frame of the exact solver.
pub const EXACT_STATE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy)]
struct ExactState {
    node: usize,
    /// Step size into this node (0 at frame 0).
    s: i64,
    /// Stationary count, clamped where the penalty saturates.
    u: u64,
    h: f64,
    back: usize,
}

/// Exact minimization of `U + T + V + S`.
///
/// The state is `(node, incoming step, stationary count)`. The incoming step
/// is determined by the predecessor node, so it is kept exactly; the
/// stationary count is clamped once `t` saturates.
pub fn solve_exact_dp(tr: &Trellis, params: &PathParams) -> Result<PosePath> {
    params.validate()?;
    if tr.is_empty() {
        return Err(Error::Infeasible { frame: 0 });
    }
    let bank = tr.bank();
    let u_cap = (params.stationary.gamma.ceil() as u64).min(tr.len() as u64);

    // Guard on the number of (node, predecessor, count) states per frame.
    for n in 1..tr.len() {
        let groups = tr.by_cluster(n - 1);
        let mut bound = 0usize;
        for node in &tr.frames[n] {
            let preds: usize = bank
                .neighbors(bank.cluster_of(node.pose))
                .iter()
                .filter_map(|c| groups.get(c).map(Vec::len))
                .sum();
            bound += preds + u_cap as usize;
        }
        if bound > EXACT_STATE_LIMIT {
            return Err(Error::StateExplosion {
                frame: n,
                states: bound,
                limit: EXACT_STATE_LIMIT,
            });
        }
    }

    let mut layers: Vec<Vec<ExactState>> = Vec::with_capacity(tr.len());
    layers.push(
        tr.frames[0]
            .iter()
            .enumerate()
            .map(|(k, node)| ExactState {
                node: k,
                s: 0,
                u: 0,
                h: node.cost,
                back: usize::MAX,
            })
            .collect(),
    );
    for n in 1..tr.len() {
        let prev = &layers[n - 1];
        let prev_nodes = &tr.frames[n - 1];
        let groups = tr.by_cluster(n);
        let mut index: HashMap<(usize, i64, u64), usize> = HashMap::new();
        let mut cur: Vec<ExactState> = Vec::new();
        for (b, st) in prev.iter().enumerate() {
            let j = prev_nodes[st.node].pose;
            for &nc in bank.neighbors(bank.cluster_of(j)) {
                let Some(members) = groups.get(&nc) else { continue };
                for &k in members {
                    let node = tr.frames[n][k];
                    let i = node.pose;
                    let step = i as i64 - j as i64;
                    let h = st.h
                        + step_weight(j, i, bank, params)
                        + speed_term(st.s, step, params)
                        + stationary_term(st.u, j, i, params)
                        + node.cost;
                    let u = if i == j { (st.u + 1).min(u_cap) } else { 0 };
                    let key = (k, step, u);
                    match index.get(&key) {
                        Some(&at) => {
                            if h < cur[at].h {
                                cur[at].h = h;
                                cur[at].back = b;
                            }
                        }
                        None => {
                            index.insert(key, cur.len());
                            cur.push(ExactState {
                                node: k,
                                s: step,
                                u,
                                h,
                                back: b,
                            });
                        }
                    }
                }
            }
        }
        if cur.is_empty() {
            return Err(Error::Infeasible { frame: n });
        }
        layers.push(cur);
    }

    let last = layers.last().unwrap();
    let nodes = tr.frames.last().unwrap();
    let mut at = 0;
    for (k, st) in last.iter().enumerate() {
        let best = &last[at];
        if st.h < best.h || (st.h == best.h && nodes[st.node].pose < nodes[best.node].pose) {
            at = k;
        }
    }
    let mut indices = vec![0; tr.len()];
    for n in (0..tr.len()).rev() {
        let st = layers[n][at];
        indices[n] = tr.frames[n][st.node].pose;
        at = st.back;
    }
    finish(indices, tr, params)
}

/// Largest number of candidate paths [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Enumerates every cluster-feasible path; ties go to the lexicographically
/// smallest pose sequence.
pub fn brute_force(tr: &Trellis, params: &PathParams) -> Result<PosePath> {
    params.validate()?;
    let count = tr
        .frames
        .iter()
        .map(|f| f.len() as u128)
        .try_fold(1u128, |acc, m| acc.checked_mul(m))
        .unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    if tr.is_empty() {
        return Err(Error::Infeasible { frame: 0 });
    }
    let bank = tr.bank();
    let mut best: Option<(Energy, Vec<usize>)> = None;
    let mut path = Vec::with_capacity(tr.len());
    fn walk(
        n: usize,
        path: &mut Vec<usize>,
        tr: &Trellis,
        bank: &ExemplarBank,
        params: &PathParams,
        best: &mut Option<(Energy, Vec<usize>)>,
    ) {
        if n == tr.len() {
            let e = energy_of_path(path, tr, params).expect("enumerated paths are feasible");
            if best.as_ref().is_none_or(|b| e.total < b.0.total) {
                *best = Some((e, path.clone()));
            }
            return;
        }
        for node in &tr.frames[n] {
            if let Some(&j) = path.last() {
                if !bank.are_neighbors(bank.cluster_of(j), bank.cluster_of(node.pose)) {
                    continue;
                }
            }
            path.push(node.pose);
            walk(n + 1, path, tr, bank, params, best);
            path.pop();
        }
    }
    walk(0, &mut path, tr, bank, params, &mut best);
    let (energy, indices) = best.ok_or(Error::Infeasible { frame: tr.len() - 1 })?;
    Ok(PosePath { indices, energy })
}

/// Two-stage variant: each frame is restricted to the poses of its most
/// probable cluster, then the recursion runs on the reduced trellis.
pub fn solve_path_cluster(
    tr: &Trellis,
    dists: &[ClusterDistribution],
    params: &PathParams,
) -> Result<PosePath> {
    if dists.len() != tr.len() {
        return Err(Error::LengthMismatch {
            what: "cluster distributions",
            expected: tr.len(),
            actual: dists.len(),
        });
    }
    let chosen: Vec<usize> = dists.iter().map(ClusterDistribution::argmax).collect();
    let bank = tr.bank();
    let restricted = tr.restrict(|n, node| bank.cluster_of(node.pose) == chosen[n])?;
    solve_paper_dp(&restricted, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Frame, Pose, POSE_DIM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank_from(cluster_of: Vec<usize>, neighbors: Vec<Vec<usize>>, breaks: Vec<usize>) -> ExemplarBank {
        let p = Pose::from_slice(&[0.0; POSE_DIM], Frame::WearerLocal).unwrap();
        ExemplarBank::from_parts(vec![p; cluster_of.len()], cluster_of, breaks, neighbors).unwrap()
    }

    /// Bank whose clusters are all pairwise neighbors.
    fn open_bank(n: usize, k: usize) -> ExemplarBank {
        bank_from((0..n).map(|i| i * k / n).collect(), vec![(0..k).collect(); k], vec![])
    }

    fn nodes(list: &[(usize, f64)]) -> Vec<TrellisNode> {
        list.iter().map(|&(pose, cost)| TrellisNode { pose, cost }).collect()
    }

    #[test]
    fn step_weight_examples() {
        let b = bank_from(
            (0..20).map(|i| if i < 10 { 0 } else { 1 }).collect(),
            vec![vec![0, 1], vec![0, 1]],
            vec![],
        );
        let p = PathParams::default();
        assert_eq!(step_weight(10, 11, &b, &p), 0.0);
        assert_eq!(step_weight(10, 12, &b, &p), 0.0);
        assert_eq!(step_weight(10, 13, &b, &p), 0.1);
        assert_eq!(step_weight(10, 9, &b, &p), 0.1);
        let far = bank_from(vec![0, 0, 1, 1], vec![vec![0], vec![1]], vec![2]);
        assert_eq!(step_weight(0, 3, &far, &p), f64::INFINITY);
        // Forward unit step across a sequence boundary is a jump.
        let split = bank_from(vec![0, 0, 0, 0], vec![vec![0]], vec![2]);
        assert_eq!(step_weight(1, 2, &split, &p), 0.1);
        assert_eq!(step_weight(0, 1, &split, &p), 0.0);
    }

    #[test]
    fn speed_and_stationary_examples() {
        let p = PathParams::default();
        assert_eq!(speed_term(1, 1, &p), 0.0);
        assert!((speed_term(0, 5, &p) - 0.05).abs() < 1e-15);
        assert!((speed_term(0, 50, &p) - 0.1).abs() < 1e-15);
        assert!((speed_term(-20, 30, &p) - 0.1).abs() < 1e-15);
        assert_eq!(stationary_term(3, 4, 5, &p), 0.0);
        assert!((stationary_term(0, 4, 4, &p) - 0.02).abs() < 1e-15);
        assert!((stationary_term(10, 4, 4, &p) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn energy_examples() {
        let b = open_bank(10, 1);
        let p = PathParams::default();
        let tr = Trellis::new(&b, vec![nodes(&[(3, 0.0), (4, 0.0), (5, 0.0)]); 3]).unwrap();
        let e = energy_of_path(&[3, 3, 3], &tr, &p).unwrap();
        assert_eq!((e.unary, e.step, e.speed), (0.0, 0.0, 0.0));
        assert!((e.stationary - 0.06).abs() < 1e-15);
        let e = energy_of_path(&[3, 4, 5], &tr, &p).unwrap();
        assert!((e.total - 0.01).abs() < 1e-15);
        assert!(matches!(
            energy_of_path(&[3, 4, 9], &tr, &p),
            Err(Error::InfeasiblePath { .. })
        ));
    }

    #[test]
    fn energy_rejects_forbidden_steps() {
        let b = bank_from(vec![0, 1], vec![vec![0], vec![1]], vec![1]);
        let tr = Trellis::new(&b, vec![nodes(&[(0, 0.0), (1, 0.0)]); 2]).unwrap();
        assert!(matches!(
            energy_of_path(&[0, 1], &tr, &PathParams::default()),
            Err(Error::InfeasiblePath { .. })
        ));
    }

    /// Independent accumulator: walks the path frame by frame with its own
    /// bookkeeping of run lengths and step sizes.
    fn reference_energy(path: &[usize], tr: &Trellis, p: &PathParams) -> f64 {
        let mut total = 0.0;
        for n in 0..path.len() {
            total += tr.frames()[n].iter().find(|x| x.pose == path[n]).unwrap().cost;
        }
        for n in 1..path.len() {
            let (j, i) = (path[n - 1], path[n]);
            let step = i as i64 - j as i64;
            total += step_weight(j, i, tr.bank(), p);
            let prev_step = if n >= 2 { path[n - 1] as i64 - path[n - 2] as i64 } else { 0 };
            let x = (prev_step - step).abs() as f64;
            total += if x < p.speed.gamma { p.speed.mu * x } else { p.speed.mu * p.speed.gamma };
            if step == 0 {
                // Length of the stationary run ending at this step.
                let mut run = 1;
                while n >= run + 1 && path[n - run - 1] == path[n - run] {
                    run += 1;
                }
                let x = run as f64;
                total += if x < p.stationary.gamma {
                    p.stationary.mu * x
                } else {
                    p.stationary.mu * p.stationary.gamma
                };
            }
        }
        total
    }

    fn random_instance(seed: u64, frames: usize, per: usize, bank_len: usize, k: usize) -> (ExemplarBank, Vec<Vec<TrellisNode>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cluster_of: Vec<usize> = (0..bank_len).map(|_| rng.random_range(0..k)).collect();
        let breaks: Vec<usize> = (1..bank_len).filter(|_| rng.random::<f64>() < 0.1).collect();
        let neighbors = crate::clustering::build_neighbor_graph(&cluster_of, &breaks, k);
        let bank = bank_from(cluster_of, neighbors, breaks);
        let frames = (0..frames)
            .map(|_| {
                let mut poses: Vec<usize> = (0..bank_len).collect();
                for a in 0..per {
                    let b = rng.random_range(a..bank_len);
                    poses.swap(a, b);
                }
                poses[..per]
                    .iter()
                    .map(|&pose| TrellisNode { pose, cost: rng.random::<f64>() })
                    .collect()
            })
            .collect();
        (bank, frames)
    }

    #[test]
    fn energy_matches_reference_accumulator() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let bank = open_bank(12, 1);
        let p = PathParams::default();
        for _ in 0..200 {
            let frames: Vec<Vec<TrellisNode>> = (0..8)
                .map(|_| (0..12).map(|pose| TrellisNode { pose, cost: rng.random::<f64>() }).collect())
                .collect();
            let tr = Trellis::new(&bank, frames).unwrap();
            // Sticky random walk so stationary runs occur.
            let mut path = vec![rng.random_range(0..12)];
            for _ in 1..8 {
                let last = *path.last().unwrap();
                path.push(if rng.random::<f64>() < 0.5 { last } else { rng.random_range(0..12) });
            }
            let e = energy_of_path(&path, &tr, &p).unwrap();
            assert!((e.total - reference_energy(&path, &tr, &p)).abs() < 1e-12);
            assert!((e.unary + e.step + e.speed + e.stationary - e.total).abs() < 1e-9);
        }
    }

    #[test]
    fn forced_single_candidate_path() {
        let b = open_bank(5, 1);
        let p = PathParams::default();
        let tr = Trellis::new(&b, vec![nodes(&[(2, 0.3)]); 4]).unwrap();
        for path in [solve_paper_dp(&tr, &p).unwrap(), solve_exact_dp(&tr, &p).unwrap()] {
            assert_eq!(path.indices, vec![2; 4]);
            assert!((path.energy.total - (1.2 + 0.02 + 0.04 + 0.06)).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_small_cases() {
        let b = open_bank(4, 2);
        let p = PathParams::default();
        let tr = Trellis::new(&b, vec![nodes(&[(0, 0.5), (1, 0.2), (3, 0.4)])]).unwrap();
        assert_eq!(brute_force(&tr, &p).unwrap().indices, vec![1]);

        let tr = Trellis::new(&b, vec![nodes(&[(0, 0.1), (3, 0.0)]), nodes(&[(1, 0.0), (2, 0.05)])]).unwrap();
        // Hand enumeration of the four paths.
        let candidates = [
            (vec![0, 1], 0.1_f64 + 0.0 + 0.0 + 0.01),
            (vec![0, 2], 0.1 + 0.05 + 0.0 + 0.02),
            (vec![3, 1], 0.0 + 0.0 + 0.1 + 0.02),
            (vec![3, 2], 0.0 + 0.05 + 0.1 + 0.01),
        ];
        let best = candidates.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let got = brute_force(&tr, &p).unwrap();
        assert_eq!(got.indices, best.0);
        assert!((got.energy.total - best.1).abs() < 1e-12);
    }

    #[test]
    fn brute_force_size_guard() {
        let b = open_bank(20, 1);
        let frame: Vec<TrellisNode> = (0..20).map(|pose| TrellisNode { pose, cost: 0.0 }).collect();
        let tr = Trellis::new(&b, vec![frame; 5]).unwrap();
        assert!(matches!(brute_force(&tr, &PathParams::default()), Err(Error::TooLarge(_))));
    }

    #[test]
    fn exact_matches_brute_force() {
        let p = PathParams::default();
        for seed in 0..100 {
            let (bank, frames) = random_instance(seed, 6, 5, 24, 4);
            let tr = Trellis::new(&bank, frames).unwrap();
            let bf = brute_force(&tr, &p);
            let ex = solve_exact_dp(&tr, &p);
            match (bf, ex) {
                (Ok(bf), Ok(ex)) => {
                    assert_eq!(bf.energy.total, ex.energy.total, "seed {seed}");
                    let paper = solve_paper_dp(&tr, &p).unwrap();
                    assert!(paper.energy.total >= ex.energy.total);
                }
                (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {}
                (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn paper_dp_is_exact_without_second_order_terms() {
        let p = PathParams::default().first_order();
        for seed in 0..100 {
            let (bank, frames) = random_instance(1000 + seed, 6, 5, 24, 4);
            let tr = Trellis::new(&bank, frames).unwrap();
            let Ok(bf) = brute_force(&tr, &p) else { continue };
            let paper = solve_paper_dp(&tr, &p).unwrap();
            let exact = solve_exact_dp(&tr, &p).unwrap();
            assert_eq!(paper.energy.total, bf.energy.total, "seed {seed}");
            assert_eq!(exact.energy.total, bf.energy.total, "seed {seed}");
        }
    }

    /// Plain first-order trellis shortest path over edge weights `w` only.
    fn reference_viterbi(tr: &Trellis, p: &PathParams) -> Vec<usize> {
        let f = tr.frames();
        let mut cost: Vec<f64> = f[0].iter().map(|x| x.cost).collect();
        let mut back: Vec<Vec<usize>> = vec![vec![0; f[0].len()]];
        for n in 1..f.len() {
            let mut next = vec![f64::INFINITY; f[n].len()];
            let mut bp = vec![0; f[n].len()];
            for (a, to) in f[n].iter().enumerate() {
                for (b, from) in f[n - 1].iter().enumerate() {
                    let c = cost[b] + step_weight(from.pose, to.pose, tr.bank(), p);
                    if c < next[a] {
                        next[a] = c;
                        bp[a] = b;
                    }
                }
                next[a] += to.cost;
            }
            cost = next;
            back.push(bp);
        }
        let mut at = (0..cost.len()).min_by(|&a, &b| cost[a].total_cmp(&cost[b])).unwrap();
        let mut path = vec![0; f.len()];
        for n in (0..f.len()).rev() {
            path[n] = f[n][at].pose;
            at = back[n][at];
        }
        path
    }

    #[test]
    fn first_order_matches_reference_viterbi() {
        let p = PathParams::default().first_order();
        for seed in 0..50 {
            let (bank, frames) = random_instance(500 + seed, 20, 8, 40, 5);
            let tr = Trellis::new(&bank, frames).unwrap();
            let Ok(paper) = solve_paper_dp(&tr, &p) else { continue };
            let reference = reference_viterbi(&tr, &p);
            let e_ref = energy_of_path(&reference, &tr, &p).unwrap();
            assert!((paper.energy.total - e_ref.total).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_trellis() {
        let b = bank_from(vec![0, 1], vec![vec![0], vec![1]], vec![1]);
        let tr = Trellis::new(&b, vec![nodes(&[(0, 0.0)]), nodes(&[(1, 0.0)])]).unwrap();
        let p = PathParams::default();
        assert!(matches!(solve_paper_dp(&tr, &p), Err(Error::Infeasible { frame: 1 })));
        assert!(matches!(solve_exact_dp(&tr, &p), Err(Error::Infeasible { frame: 1 })));
        assert!(matches!(brute_force(&tr, &p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn paper_dp_state_bookkeeping() {
        let b = open_bank(10, 1);
        let p = PathParams::default();
        let tr = Trellis::new(&b, vec![nodes(&[(4, 0.0)]), nodes(&[(4, 0.0)]), nodes(&[(6, 0.0)])]).unwrap();
        let st = paper_dp_states(&tr, &p).unwrap();
        assert_eq!(st[0][0], NodeState { h: 0.0, u: 0, s: 0, p: None });
        assert_eq!((st[1][0].u, st[1][0].s, st[1][0].p), (1, 0, Some(0)));
        assert_eq!((st[2][0].u, st[2][0].s), (0, 2));
    }

    #[test]
    fn path_cluster_single_cluster_equals_full() {
        let p = PathParams::default();
        let (bank, frames) = random_instance(7, 10, 6, 30, 1);
        let tr = Trellis::new(&bank, frames).unwrap();
        let dists = vec![ClusterDistribution::uniform(1); 10];
        assert_eq!(solve_path_cluster(&tr, &dists, &p).unwrap(), solve_paper_dp(&tr, &p).unwrap());
    }

    #[test]
    fn path_cluster_loses_when_true_cluster_ranks_second() {
        // Poses 0, 1 in cluster 0 and 2, 3 in cluster 1; the clusters are neighbors.
        let bank = bank_from(vec![0, 0, 1, 1], vec![vec![0, 1], vec![0, 1]], vec![]);
        let p = PathParams::default();
        let tr = Trellis::new(
            &bank,
            vec![
                nodes(&[(0, 0.0)]),
                nodes(&[(1, 0.40), (2, 0.41)]),
                nodes(&[(2, 0.0)]),
            ],
        )
        .unwrap();
        // Frame 1 ranks cluster 1 first, but the best path passes through pose 1.
        let dists = vec![
            ClusterDistribution::from_weights(vec![1.0, 0.0]).unwrap(),
            ClusterDistribution::from_weights(vec![0.4, 0.6]).unwrap(),
            ClusterDistribution::from_weights(vec![0.0, 1.0]).unwrap(),
        ];
        let bf = brute_force(&tr, &p).unwrap();
        assert_eq!(bf.indices, vec![0, 1, 2]);
        assert!((bf.energy.total - 0.41).abs() < 1e-12);
        let full = solve_paper_dp(&tr, &p).unwrap();
        assert_eq!(full.indices, bf.indices);
        let pc = solve_path_cluster(&tr, &dists, &p).unwrap();
        assert_eq!(pc.indices, vec![0, 2, 2]);
        assert!((pc.energy.total - 0.47).abs() < 1e-12);
        assert!(pc.energy.total > full.energy.total);
    }

    #[test]
    fn path_cluster_equals_full_when_restriction_is_not_binding() {
        let p = PathParams::default();
        for seed in 0..20 {
            let (bank, frames) = random_instance(300 + seed, 6, 5, 24, 4);
            let tr = Trellis::new(&bank, frames).unwrap();
            let Ok(full) = solve_paper_dp(&tr, &p) else { continue };
            let dists: Vec<ClusterDistribution> = full
                .indices
                .iter()
                .map(|&i| {
                    let mut w = vec![0.1; bank.k()];
                    w[bank.cluster_of(i)] = 1.0;
                    ClusterDistribution::from_weights(w).unwrap()
                })
                .collect();
            let pc = solve_path_cluster(&tr, &dists, &p).unwrap();
            assert_eq!(pc.indices, full.indices);
        }
    }

    #[test]
    fn state_explosion_guard() {
        // One cluster, 3200 candidates per frame: 3200 * (3200 + 5) states.
        let b = open_bank(3200, 1);
        let frame: Vec<TrellisNode> = (0..3200).map(|pose| TrellisNode { pose, cost: 0.0 }).collect();
        let tr = Trellis::new(&b, vec![frame; 2]).unwrap();
        assert!(matches!(
            solve_exact_dp(&tr, &PathParams::default()),
            Err(Error::StateExplosion { .. })
        ));
    }
}
