//! Budgeted maximum coverage over candidate camera configurations.
//!
//! [`solve_exact`] is a depth-first branch-and-bound: each node branches on
//! the eligible candidate with the best marginal gain per unit cost (include
//! first, then exclude) and is pruned with a fractional-knapsack bound over
//! the current marginal gains, capped by the size of their union. Marginal
//! gains of a coverage function only shrink as the selection grows, so the
//! bound is valid for every completion of the node.
//!
//! [`solve_greedy`] is the usual ratio greedy.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::scene::FreeId;

const COST_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    /// Sorted, unique free-voxel ids seen by this configuration.
    pub voxels: Vec<FreeId>,
    #[serde(default = "unit_cost")]
    pub cost: f64,
    /// Voxel coordinates of the camera; candidates without one form their
    /// own locale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[i64; 3]>,
}

fn unit_cost() -> f64 {
    1.0
}

impl Candidate {
    pub fn new(voxels: Vec<FreeId>) -> Self {
        Candidate { voxels, cost: 1.0, position: None }
    }

    pub fn at(voxels: Vec<FreeId>, position: [i64; 3]) -> Self {
        Candidate { voxels, cost: 1.0, position: Some(position) }
    }
}

/// A coverage instance. Candidate voxel sets are kept both as sorted id
/// lists and as packed bitsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDump", into = "InstanceDump")]
pub struct CoverageInstance {
    n_voxels: usize,
    budget: f64,
    r_loc: u32,
    candidates: Vec<Candidate>,
    words: usize,
    bits: Vec<u64>,
}

/// JSON form of a [`CoverageInstance`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDump {
    pub n_voxels: usize,
    pub budget: f64,
    #[serde(default)]
    pub r_loc: u32,
    pub candidates: Vec<Candidate>,
}

impl TryFrom<InstanceDump> for CoverageInstance {
    type Error = SolverError;

    fn try_from(d: InstanceDump) -> Result<Self, SolverError> {
        let mut inst = CoverageInstance::new(d.n_voxels, d.budget, d.r_loc)?;
        for c in d.candidates {
            inst.push(c)?;
        }
        Ok(inst)
    }
}

impl From<CoverageInstance> for InstanceDump {
    fn from(i: CoverageInstance) -> Self {
        InstanceDump { n_voxels: i.n_voxels, budget: i.budget, r_loc: i.r_loc, candidates: i.candidates }
    }
}

fn invalid(msg: impl Into<String>) -> SolverError {
    SolverError::InvalidInstance(msg.into())
}

impl CoverageInstance {
    pub fn new(n_voxels: usize, budget: f64, r_loc: u32) -> Result<Self, SolverError> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(invalid(format!("budget {budget} must be finite and >= 0")));
        }
        Ok(CoverageInstance {
            n_voxels,
            budget,
            r_loc,
            candidates: Vec::new(),
            words: n_voxels.div_ceil(64),
            bits: Vec::new(),
        })
    }

    /// Builds a unit-cost instance with distinct locales.
    pub fn from_sets(n_voxels: usize, budget: f64, sets: Vec<Vec<FreeId>>) -> Result<Self, SolverError> {
        let mut inst = Self::new(n_voxels, budget, 0)?;
        for s in sets {
            inst.push(Candidate::new(s))?;
        }
        Ok(inst)
    }

    pub fn push(&mut self, c: Candidate) -> Result<usize, SolverError> {
        if !(c.cost > 0.0 && c.cost.is_finite()) {
            return Err(invalid(format!("cost {} must be finite and > 0", c.cost)));
        }
        if c.voxels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("voxel ids must be sorted and unique"));
        }
        if let Some(&last) = c.voxels.last() {
            if last as usize >= self.n_voxels {
                return Err(invalid(format!("voxel id {last} outside 0..{}", self.n_voxels)));
            }
        }
        let start = self.bits.len();
        self.bits.resize(start + self.words, 0);
        for &v in &c.voxels {
            self.bits[start + v as usize / 64] |= 1 << (v % 64);
        }
        self.candidates.push(c);
        Ok(self.candidates.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn n_voxels(&self) -> usize {
        self.n_voxels
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn set_budget(&mut self, budget: f64) -> Result<(), SolverError> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(invalid(format!("budget {budget} must be finite and >= 0")));
        }
        self.budget = budget;
        Ok(())
    }

    pub fn r_loc(&self) -> u32 {
        self.r_loc
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn candidate(&self, i: usize) -> &Candidate {
        &self.candidates[i]
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Locale groups with more than one member. With `r_loc = 0` these
    /// partition the candidates by position; otherwise there is one group per
    /// candidate position holding every candidate within Chebyshev distance
    /// `r_loc` of it.
    pub fn locale_groups(&self) -> Vec<Vec<usize>> {
        let mut by_pos: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (i, c) in self.candidates.iter().enumerate() {
            if let Some(p) = c.position {
                by_pos.entry(p).or_default().push(i);
            }
        }
        let mut groups: Vec<Vec<usize>> = if self.r_loc == 0 {
            by_pos.into_values().collect()
        } else {
            let r = self.r_loc as i64;
            let cells: Vec<_> = by_pos.iter().collect();
            cells
                .iter()
                .map(|(p, _)| {
                    let mut g: Vec<usize> = cells
                        .iter()
                        .filter(|(q, _)| (0..3).all(|a| (p[a] - q[a]).abs() <= r))
                        .flat_map(|(_, members)| members.iter().copied())
                        .collect();
                    g.sort_unstable();
                    g
                })
                .collect()
        };
        groups.retain(|g| g.len() > 1);
        groups.sort();
        groups.dedup();
        groups
    }

    fn locales(&self) -> Locales {
        let groups = self.locale_groups();
        let mut of = vec![Vec::new(); self.len()];
        for (gi, g) in groups.iter().enumerate() {
            for &c in g {
                of[c].push(gi);
            }
        }
        Locales { n_groups: groups.len(), of, partition: self.r_loc == 0 }
    }

    /// Checks budget, index range, duplicates and locale constraints.
    pub fn check_selection(&self, selected: &[usize]) -> Result<(), String> {
        let mut seen = vec![false; self.len()];
        let mut cost = 0.0;
        for &i in selected {
            if i >= self.len() {
                return Err(format!("candidate {i} out of range"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("candidate {i} selected twice"));
            }
            cost += self.candidates[i].cost;
        }
        if cost > self.budget + COST_EPSILON {
            return Err(format!("cost {cost} exceeds budget {}", self.budget));
        }
        for g in self.locale_groups() {
            let n = g.iter().filter(|&&i| seen[i]).count();
            if n > 1 {
                return Err(format!("{n} candidates selected in one locale"));
            }
        }
        Ok(())
    }

    /// Union of the voxel sets of `selected`, sorted.
    pub fn covered_by(&self, selected: &[usize]) -> Vec<FreeId> {
        let mut acc = vec![0u64; self.words];
        for &i in selected {
            or_into(&mut acc, self.row(i));
        }
        ones(&acc)
    }

    /// Feasible solution for an explicit selection.
    pub fn solution(&self, selected: &[usize], status: Optimality) -> Result<Solution, SolverError> {
        self.check_selection(selected).map_err(SolverError::InfeasibleWarmStart)?;
        let mut selected = selected.to_vec();
        selected.sort_unstable();
        let covered = self.covered_by(&selected);
        Ok(Solution { objective: covered.len(), selected, covered, status, wall_time: Duration::ZERO })
    }
}

struct Locales {
    n_groups: usize,
    of: Vec<Vec<usize>>,
    partition: bool,
}

fn or_into(acc: &mut [u64], row: &[u64]) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a |= r;
    }
}

fn gain(covered: &[u64], row: &[u64]) -> usize {
    covered.iter().zip(row).map(|(c, r)| (r & !c).count_ones() as usize).sum()
}

fn ones(bits: &[u64]) -> Vec<FreeId> {
    let mut out = Vec::new();
    for (w, &word) in bits.iter().enumerate() {
        let mut x = word;
        while x != 0 {
            out.push((w * 64 + x.trailing_zeros() as usize) as FreeId);
            x &= x - 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimality {
    /// Search completed: no feasible selection covers more.
    Proven,
    /// Time limit reached; best selection found so far.
    Incumbent,
    /// Produced by the greedy heuristic.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub selected: Vec<usize>,
    pub objective: usize,
    pub covered: Vec<FreeId>,
    pub status: Optimality,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Solution {
    pub fn empty(status: Optimality) -> Self {
        Solution { selected: Vec::new(), objective: 0, covered: Vec::new(), status, wall_time: Duration::ZERO }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Exact,
    Greedy,
}

/// Ratio greedy: repeatedly take the affordable, locale-compatible candidate
/// with the largest marginal gain per unit cost (lowest index on ties) until
/// nothing affordable adds coverage.
pub fn solve_greedy(instance: &CoverageInstance) -> Solution {
    let t0 = Instant::now();
    let locales = instance.locales();
    let mut alive = vec![true; instance.len()];
    let mut group_used = vec![false; locales.n_groups];
    let mut covered = vec![0u64; instance.words];
    let mut remaining = instance.budget;
    let mut selected = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
            let cost = instance.candidates[i].cost;
            if cost > remaining + COST_EPSILON {
                continue;
            }
            let g = gain(&covered, instance.row(i));
            let ratio = g as f64 / cost;
            if g > 0 && best.is_none_or(|(_, _, r)| ratio > r) {
                best = Some((i, g, ratio));
            }
        }
        let Some((i, _, _)) = best else { break };
        selected.push(i);
        remaining -= instance.candidates[i].cost;
        or_into(&mut covered, instance.row(i));
        alive[i] = false;
        for &g in &locales.of[i] {
            group_used[g] = true;
        }
        for (j, a) in alive.iter_mut().enumerate() {
            if *a && locales.of[j].iter().any(|&g| group_used[g]) {
                *a = false;
            }
        }
    }
    selected.sort_unstable();
    let covered = ones(&covered);
    Solution {
        objective: covered.len(),
        selected,
        covered,
        status: Optimality::Heuristic,
        wall_time: t0.elapsed(),
    }
}

/// Greedy, falling back to `warm_start` when it covers more.
pub fn solve_greedy_warm(
    instance: &CoverageInstance,
    warm_start: Option<&Solution>,
) -> Result<Solution, SolverError> {
    let greedy = solve_greedy(instance);
    let Some(w) = warm_start else { return Ok(greedy) };
    let warm = instance.solution(&w.selected, Optimality::Heuristic)?;
    Ok(if warm.objective > greedy.objective { Solution { wall_time: greedy.wall_time, ..warm } } else { greedy })
}

/// Exact maximum coverage by branch-and-bound.
///
/// The search starts from the better of `warm_start` and the greedy
/// solution, so the result never covers less than either. When
/// `time_limit` expires the best incumbent is returned with status
/// [`Optimality::Incumbent`].
pub fn solve_exact(
    instance: &CoverageInstance,
    warm_start: Option<&Solution>,
    time_limit: Option<Duration>,
) -> Result<Solution, SolverError> {
    let t0 = Instant::now();
    let deadline = time_limit.map(|d| t0 + d);
    let warm = warm_start
        .map(|w| instance.solution(&w.selected, Optimality::Incumbent))
        .transpose()?;
    let greedy = solve_greedy(instance);
    let (best_obj, best_sel) = match warm {
        Some(w) if w.objective >= greedy.objective => (w.objective, w.selected),
        _ => (greedy.objective, greedy.selected),
    };

    let locales = instance.locales();
    let unit = instance.candidates.iter().all(|c| c.cost == 1.0);
    let mut search = Search {
        inst: instance,
        locales: &locales,
        unit_partition: unit && locales.partition,
        best_obj,
        best_sel,
        deadline,
        timed_out: false,
        selected: Vec::new(),
        group_used: vec![false; locales.n_groups],
    };
    let eligible: Vec<usize> = (0..instance.len()).collect();
    let mut covered = vec![0u64; instance.words];
    search.node(&mut covered, 0, instance.budget, eligible);

    let status = if search.timed_out { Optimality::Incumbent } else { Optimality::Proven };
    let mut sol = instance.solution(&search.best_sel, status)?;
    sol.wall_time = t0.elapsed();
    Ok(sol)
}

/// Dispatches to the configured solver.
pub fn solve(
    kind: SolverKind,
    instance: &CoverageInstance,
    warm_start: Option<&Solution>,
    time_limit: Option<Duration>,
) -> Result<Solution, SolverError> {
    match kind {
        SolverKind::Exact => solve_exact(instance, warm_start, time_limit),
        SolverKind::Greedy => solve_greedy_warm(instance, warm_start),
    }
}

struct Search<'a> {
    inst: &'a CoverageInstance,
    locales: &'a Locales,
    unit_partition: bool,
    best_obj: usize,
    best_sel: Vec<usize>,
    deadline: Option<Instant>,
    timed_out: bool,
    selected: Vec<usize>,
    group_used: Vec<bool>,
}

impl Search<'_> {
    fn node(&mut self, covered: &mut Vec<u64>, cov: usize, remaining: f64, eligible: Vec<usize>) {
        if cov > self.best_obj {
            self.best_obj = cov;
            self.best_sel = self.selected.clone();
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        // (candidate, gain), best ratio first
        let mut cands: Vec<(usize, usize)> = eligible
            .into_iter()
            .filter(|&i| {
                self.inst.candidates[i].cost <= remaining + COST_EPSILON
                    && !self.locales.of[i].iter().any(|&g| self.group_used[g])
            })
            .filter_map(|i| {
                let g = gain(covered, self.inst.row(i));
                (g > 0).then_some((i, g))
            })
            .collect();
        let ratio = |&(i, g): &(usize, usize)| g as f64 / self.inst.candidates[i].cost;
        cands.sort_by(|a, b| ratio(b).total_cmp(&ratio(a)).then(a.0.cmp(&b.0)));

        let mut union = covered.clone();
        for &(i, _) in &cands {
            or_into(&mut union, self.inst.row(i));
        }
        let reachable: usize = union.iter().map(|w| w.count_ones() as usize).sum();

        for k in 0..cands.len() {
            let rest = &cands[k..];
            let bound = (cov + self.knapsack_bound(rest, remaining)).min(reachable);
            if bound <= self.best_obj {
                return;
            }
            let (i, _) = cands[k];
            let saved = covered.clone();
            or_into(covered, self.inst.row(i));
            let g = cands[k].1;
            for &gi in &self.locales.of[i] {
                self.group_used[gi] = true;
            }
            self.selected.push(i);
            let next: Vec<usize> = cands[k + 1..].iter().map(|&(j, _)| j).collect();
            self.node(covered, cov + g, remaining - self.inst.candidates[i].cost, next);
            self.selected.pop();
            for &gi in &self.locales.of[i] {
                self.group_used[gi] = false;
            }
            *covered = saved;
            if self.timed_out {
                return;
            }
        }
    }

    /// Fractional knapsack over marginal gains sorted by ratio. With unit
    /// costs and partitioning locales only the best candidate of each
    /// locale counts.
    fn knapsack_bound(&self, sorted: &[(usize, usize)], remaining: f64) -> usize {
        let mut left = remaining + COST_EPSILON;
        let mut total = 0.0;
        let mut taken_groups: Vec<usize> = Vec::new();
        for &(i, g) in sorted {
            if left <= COST_EPSILON {
                break;
            }
            if self.unit_partition {
                if let Some(&gi) = self.locales.of[i].first() {
                    if taken_groups.contains(&gi) {
                        continue;
                    }
                    taken_groups.push(gi);
                }
            }
            let cost = self.inst.candidates[i].cost;
            if cost <= left {
                total += g as f64;
                left -= cost;
            } else {
                total += g as f64 * left / cost;
                break;
            }
        }
        (total + 1e-9).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigCoverage {
    pub candidate: usize,
    pub covered: usize,
    /// Fraction of the network's coverage seen by this configuration.
    pub share: f64,
    /// Voxels this configuration shares with at least one other selected one.
    pub overcovered: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    pub per_config: Vec<ConfigCoverage>,
    pub covered: usize,
    /// Voxels seen by two or more selected configurations.
    pub overcovered: usize,
    pub cost: f64,
}

pub fn coverage_metrics(solution: &Solution, instance: &CoverageInstance) -> CoverageMetrics {
    let mut multiplicity = vec![0u32; instance.n_voxels];
    for &i in &solution.selected {
        for &v in &instance.candidates[i].voxels {
            multiplicity[v as usize] += 1;
        }
    }
    let covered = multiplicity.iter().filter(|&&m| m > 0).count();
    let per_config = solution
        .selected
        .iter()
        .map(|&i| {
            let vox = &instance.candidates[i].voxels;
            ConfigCoverage {
                candidate: i,
                covered: vox.len(),
                share: if covered == 0 { 0.0 } else { vox.len() as f64 / covered as f64 },
                overcovered: vox.iter().filter(|&&v| multiplicity[v as usize] > 1).count(),
            }
        })
        .collect();
    CoverageMetrics {
        per_config,
        covered,
        overcovered: multiplicity.iter().filter(|&&m| m > 1).count(),
        cost: solution.selected.iter().map(|&i| instance.candidates[i].cost).sum(),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Best objective over every feasible subset.
    pub fn brute_force(instance: &CoverageInstance) -> usize {
        let n = instance.len();
        assert!(n <= 20);
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let sel: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if instance.check_selection(&sel).is_ok() {
                let mut vox: Vec<FreeId> =
                    sel.iter().flat_map(|&i| instance.candidate(i).voxels.iter().copied()).collect();
                vox.sort_unstable();
                vox.dedup();
                best = best.max(vox.len());
            }
        }
        best
    }
}
