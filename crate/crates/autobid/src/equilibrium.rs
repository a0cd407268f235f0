//! Equilibrium verification and search.
//!
//! A multiplier profile is accepted when there exists an allocation,
//! supported on the winner sets and priced at the second-highest bid, that
//! fully allocates every item, satisfies every bidder's return-on-spend
//! inequality, and binds it for every bidder below the cap. With prices
//! fixed by clearing, that is a linear feasibility problem in the shares,
//! solved exactly. The approximate variant relaxes winner membership by a
//! factor `1 - beta`, RoS by `1 - beta`, and pacing by `1 + beta`; at
//! `beta = 0` the two verdicts coincide term for term.

use num::{One, Signed, Zero};
use rayon::prelude::*;

use crate::auction::{bids, clear_bids, BidMatrix};
use crate::lp::{LpProblem, LpResult, Rel};
use crate::model::{
    liquid_welfare, optimal_welfare, AuctionOutcome, AutobiddingInstance, MultiplierProfile,
};
use crate::rational::Q;
use crate::{Error, Result};

/// Which equilibrium condition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    HighestBid,
    SecondPrice,
    FullAllocation,
    Ros,
    MaximalPacing,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::HighestBid => "highest-bid",
            Condition::SecondPrice => "second-price",
            Condition::FullAllocation => "full-allocation",
            Condition::Ros => "ros",
            Condition::MaximalPacing => "maximal-pacing",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumVerdict {
    pub accepted: bool,
    pub witness: Option<AuctionOutcome>,
    pub violated: Option<Condition>,
    /// Smallest total constraint violation over allocations, for diagnosis:
    /// unburnable surplus under `maximal-pacing`, deficit under `ros`.
    pub residual: Option<Q>,
}

/// Per-item winner candidates with per-winner payment rates.
///
/// For candidate `i` the rate is the highest competing entry
/// `max(reserve, max_{i' != i} b_i'j)`; at `beta = 0` every candidate is a
/// maximum bidder and the rate equals the clearing price.
struct CandidateTable {
    items: Vec<ItemCandidates>,
}

struct ItemCandidates {
    bidders: Vec<(usize, Q)>, // (bidder, payment rate)
    pseudo: bool,
    clearing_price: Q,
}

fn candidate_table(instance: &AutobiddingInstance, b: &BidMatrix, beta: &Q) -> CandidateTable {
    let (n, k) = (instance.n(), instance.k());
    let relax = Q::one() - beta.clone();
    let clearing = clear_bids(instance, b);
    let mut items = Vec::with_capacity(k);
    for j in 0..k {
        let reserve = instance.reserve(j);
        // top two entries of the bids-plus-reserve multiset, with the top's
        // multiplicity
        let mut top = reserve.clone();
        let mut second = Q::zero();
        let mut top_count = 1usize;
        for i in 0..n {
            let bid = &b.0[i][j];
            if *bid > top {
                second = std::mem::replace(&mut top, bid.clone());
                top_count = 1;
            } else if *bid == top {
                top_count += 1;
                second = top.clone();
            } else if *bid > second {
                second = bid.clone();
            }
        }
        if top.is_zero() {
            // welfare-neutral item: lowest-index bidder takes it at zero
            items.push(ItemCandidates {
                bidders: if n > 0 { vec![(0, Q::zero())] } else { Vec::new() },
                pseudo: n == 0,
                clearing_price: Q::zero(),
            });
            continue;
        }
        let threshold = relax.clone() * top.clone();
        let mut bidders = Vec::new();
        for i in 0..n {
            let bid = &b.0[i][j];
            if *bid >= threshold {
                // highest competing entry once i's own bid is removed
                let rate = if *bid == top && top_count == 1 { second.clone() } else { top.clone() };
                bidders.push((i, rate));
            }
        }
        let pseudo = *reserve >= threshold;
        items.push(ItemCandidates { bidders, pseudo, clearing_price: clearing.0[j].price.clone() });
    }
    CandidateTable { items }
}

/// Exact verification per the five equilibrium conditions.
pub fn check_equilibrium(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
) -> Result<EquilibriumVerdict> {
    check_approx_equilibrium(instance, profile, &Q::zero())
}

/// Verification with multiplicative slack `beta` in winner membership, RoS,
/// and pacing. `beta = 0` agrees exactly with `check_equilibrium`.
pub fn check_approx_equilibrium(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
    beta: &Q,
) -> Result<EquilibriumVerdict> {
    if beta.is_negative() || *beta >= Q::one() {
        return Err(Error::InvalidParameter("beta must lie in [0, 1)".into()));
    }
    let b = bids(instance, profile)?;
    let table = candidate_table(instance, &b, beta);
    Ok(feasibility_verdict(instance, profile, beta, &table))
}

struct LpLayout {
    // variable index per (item, candidate position); pseudo variable per item
    vars: Vec<Vec<usize>>,
    pseudo_vars: Vec<Option<usize>>,
    num_vars: usize,
    forced_value: Vec<Q>,
    forced_pay: Vec<Q>,
    forced_pseudo: Vec<bool>,
}

fn layout(instance: &AutobiddingInstance, table: &CandidateTable) -> LpLayout {
    let (n, k) = (instance.n(), instance.k());
    let mut vars = vec![Vec::new(); k];
    let mut pseudo_vars = vec![None; k];
    let mut forced_value = vec![Q::zero(); n];
    let mut forced_pay = vec![Q::zero(); n];
    let mut forced_pseudo = vec![false; k];
    let mut num_vars = 0;
    for (j, item) in table.items.iter().enumerate() {
        let count = item.bidders.len() + usize::from(item.pseudo);
        if count <= 1 {
            // forced allocation: the single candidate takes the whole item
            if let Some((i, rate)) = item.bidders.first() {
                forced_value[*i] += instance.value(*i, j).clone();
                forced_pay[*i] += rate.clone();
            } else {
                forced_pseudo[j] = true;
            }
            continue;
        }
        for _ in &item.bidders {
            vars[j].push(num_vars);
            num_vars += 1;
        }
        if item.pseudo {
            pseudo_vars[j] = Some(num_vars);
            num_vars += 1;
        }
    }
    LpLayout { vars, pseudo_vars, num_vars, forced_value, forced_pay, forced_pseudo }
}

/// Minimum total pacing surplus over feasible allocations; zero iff the
/// profile is an equilibrium at slack `beta`.
fn feasibility_verdict(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
    beta: &Q,
    table: &CandidateTable,
) -> EquilibriumVerdict {
    let n = instance.n();
    let lay = layout(instance, table);
    let lo = Q::one() - beta.clone();
    let hi = Q::one() + beta.clone();
    let at_cap: Vec<bool> = (0..n).map(|i| profile.get(i) == instance.cap()).collect();

    // bidders whose flows are entirely forced are checked by arithmetic
    let mut has_vars = vec![false; n];
    for (j, item) in table.items.iter().enumerate() {
        if !lay.vars[j].is_empty() {
            for (i, _) in &item.bidders {
                has_vars[*i] = true;
            }
        }
    }
    let mut const_excess = Q::zero();
    for i in 0..n {
        if has_vars[i] {
            continue;
        }
        let deficit = lo.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
        if deficit.is_positive() {
            return EquilibriumVerdict {
                accepted: false,
                witness: None,
                violated: Some(Condition::Ros),
                residual: Some(deficit),
            };
        }
        if !at_cap[i] {
            let excess = lay.forced_value[i].clone() - hi.clone() * lay.forced_pay[i].clone();
            if excess.is_positive() {
                const_excess += excess;
            }
        }
    }

    if lay.num_vars == 0 {
        let accepted = const_excess.is_zero();
        return EquilibriumVerdict {
            accepted,
            witness: accepted.then(|| assemble_outcome(instance, table, &lay, &[])),
            violated: (!accepted).then_some(Condition::MaximalPacing),
            residual: (!accepted).then_some(const_excess),
        };
    }

    // excess variables e_i for bidders below cap with undetermined flows
    let mut excess_var = vec![None; n];
    let mut num_vars = lay.num_vars;
    for i in 0..n {
        if has_vars[i] && !at_cap[i] {
            excess_var[i] = Some(num_vars);
            num_vars += 1;
        }
    }

    let mut lp = LpProblem::new(num_vars);
    lp.set_objective(excess_var.iter().flatten().map(|&v| (v, -Q::one())).collect());
    add_allocation_rows(&mut lp, table, &lay);
    for i in 0..n {
        if !has_vars[i] {
            continue;
        }
        // RoS: value >= (1-beta) * payment
        let row = flow_row(instance, table, &lay, i, &lo);
        let rhs = lo.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
        lp.constrain(row, Rel::Ge, rhs);
        // pacing: value <= (1+beta) * payment + e_i for bidders below cap
        if let Some(ev) = excess_var[i] {
            let mut row = flow_row(instance, table, &lay, i, &hi);
            row.push((ev, -Q::one()));
            let rhs = hi.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
            lp.constrain(row, Rel::Le, rhs);
        }
    }

    match lp.maximize() {
        LpResult::Optimal { objective, point } => {
            let min_excess = const_excess - objective; // objective = -sum e
            if min_excess.is_zero() {
                EquilibriumVerdict {
                    accepted: true,
                    witness: Some(assemble_outcome(instance, table, &lay, &point)),
                    violated: None,
                    residual: None,
                }
            } else {
                EquilibriumVerdict {
                    accepted: false,
                    witness: None,
                    violated: Some(Condition::MaximalPacing),
                    residual: Some(min_excess),
                }
            }
        }
        LpResult::Infeasible => EquilibriumVerdict {
            accepted: false,
            witness: None,
            violated: Some(Condition::Ros),
            residual: ros_residual(instance, table, &lay, &lo),
        },
        LpResult::Unbounded => unreachable!("excess minimization is bounded"),
    }
}

/// Coefficients of `value - scale * payment` restricted to LP variables.
fn flow_row(
    instance: &AutobiddingInstance,
    table: &CandidateTable,
    lay: &LpLayout,
    bidder: usize,
    scale: &Q,
) -> Vec<(usize, Q)> {
    let mut row = Vec::new();
    for (j, item) in table.items.iter().enumerate() {
        if lay.vars[j].is_empty() {
            continue;
        }
        for (pos, (i, rate)) in item.bidders.iter().enumerate() {
            if *i == bidder {
                let coeff = instance.value(bidder, j).clone() - scale.clone() * rate.clone();
                row.push((lay.vars[j][pos], coeff));
            }
        }
    }
    row
}

fn add_allocation_rows(lp: &mut LpProblem, table: &CandidateTable, lay: &LpLayout) {
    for (j, _) in table.items.iter().enumerate() {
        if lay.vars[j].is_empty() && lay.pseudo_vars[j].is_none() {
            continue;
        }
        let mut row: Vec<(usize, Q)> = lay.vars[j].iter().map(|&v| (v, Q::one())).collect();
        if let Some(v) = lay.pseudo_vars[j] {
            row.push((v, Q::one()));
        }
        lp.constrain(row, Rel::Eq, Q::one());
    }
}

/// Smallest total RoS deficit when pacing is dropped, for the rejection
/// report.
fn ros_residual(
    instance: &AutobiddingInstance,
    table: &CandidateTable,
    lay: &LpLayout,
    lo: &Q,
) -> Option<Q> {
    let n = instance.n();
    let mut lp = LpProblem::new(lay.num_vars + n);
    lp.set_objective((0..n).map(|i| (lay.num_vars + i, -Q::one())).collect());
    add_allocation_rows(&mut lp, table, lay);
    for i in 0..n {
        let mut row = flow_row(instance, table, lay, i, lo);
        row.push((lay.num_vars + i, Q::one()));
        let rhs = lo.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
        lp.constrain(row, Rel::Ge, rhs);
    }
    match lp.maximize() {
        LpResult::Optimal { objective, .. } => Some(-objective),
        _ => None,
    }
}

fn assemble_outcome(
    instance: &AutobiddingInstance,
    table: &CandidateTable,
    lay: &LpLayout,
    point: &[Q],
) -> AuctionOutcome {
    let (n, k) = (instance.n(), instance.k());
    let mut allocation = vec![vec![Q::zero(); k]; n];
    let mut reserve_shares = vec![Q::zero(); k];
    let mut prices = Vec::with_capacity(k);
    for (j, item) in table.items.iter().enumerate() {
        if lay.vars[j].is_empty() && lay.pseudo_vars[j].is_none() {
            if lay.forced_pseudo[j] {
                reserve_shares[j] = Q::one();
                prices.push(Q::zero()); // unsold-item price convention
            } else {
                let (i, _) = item.bidders[0];
                allocation[i][j] = Q::one();
                prices.push(item.clearing_price.clone());
            }
            continue;
        }
        for (pos, (i, _)) in item.bidders.iter().enumerate() {
            allocation[*i][j] = point[lay.vars[j][pos]].clone();
        }
        if let Some(v) = lay.pseudo_vars[j] {
            reserve_shares[j] = point[v].clone();
        }
        prices.push(item.clearing_price.clone());
    }
    AuctionOutcome { allocation, reserve_shares, prices }
}

/// Objective for optimizing over the witness polytope of an accepted
/// profile.
#[derive(Clone, Debug)]
pub enum WitnessObjective {
    /// Liquid welfare. Linear when budgets are unbounded; with finite
    /// budgets the maximization is exact via capped auxiliaries and the
    /// minimization reports the clamped welfare of the linear minimizer's
    /// witness.
    Welfare,
    /// Price-weighted sold fractions.
    Revenue,
    /// An arbitrary linear functional of the allocation shares.
    Allocation(Vec<(usize, usize, Q)>),
}

/// Optimizes a linear functional over the witness allocations of `profile`.
/// Returns `None` when the profile is not accepted at slack `beta`.
pub fn optimize_witness(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
    beta: &Q,
    objective: &WitnessObjective,
    maximize: bool,
) -> Result<Option<(Q, AuctionOutcome)>> {
    if beta.is_negative() || *beta >= Q::one() {
        return Err(Error::InvalidParameter("beta must lie in [0, 1)".into()));
    }
    let b = bids(instance, profile)?;
    let table = candidate_table(instance, &b, beta);
    let lay = layout(instance, &table);
    let lo = Q::one() - beta.clone();
    let hi = Q::one() + beta.clone();
    let n = instance.n();
    let at_cap: Vec<bool> = (0..n).map(|i| profile.get(i) == instance.cap()).collect();

    let budgeted_max =
        matches!(objective, WitnessObjective::Welfare) && maximize && !instance.is_plain();
    let mut num_vars = lay.num_vars;
    let mut welfare_aux = Vec::new();
    if budgeted_max {
        welfare_aux = (0..n).map(|i| num_vars + i).collect();
        num_vars += n;
    }

    let mut lp = LpProblem::new(num_vars);
    add_allocation_rows(&mut lp, &table, &lay);
    for i in 0..n {
        let row = flow_row(instance, &table, &lay, i, &lo);
        let rhs = lo.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
        if row.is_empty() {
            if rhs.is_positive() {
                return Ok(None);
            }
        } else {
            lp.constrain(row, Rel::Ge, rhs);
        }
        if !at_cap[i] {
            let row = flow_row(instance, &table, &lay, i, &hi);
            let rhs = hi.clone() * lay.forced_pay[i].clone() - lay.forced_value[i].clone();
            if row.is_empty() {
                if rhs.is_negative() {
                    return Ok(None);
                }
            } else {
                lp.constrain(row, Rel::Le, rhs);
            }
        }
    }

    // objective as coefficients over share variables plus a constant from
    // the forced allocations
    let mut coeffs: Vec<(usize, Q)> = Vec::new();
    let mut constant = Q::zero();
    match objective {
        WitnessObjective::Welfare => {
            if budgeted_max {
                for i in 0..n {
                    coeffs.push((welfare_aux[i], Q::one()));
                    let mut row: Vec<(usize, Q)> = vec![(welfare_aux[i], Q::one())];
                    for (j, item) in table.items.iter().enumerate() {
                        if lay.vars[j].is_empty() {
                            continue;
                        }
                        for (pos, (b_i, _)) in item.bidders.iter().enumerate() {
                            if *b_i == i {
                                row.push((
                                    lay.vars[j][pos],
                                    -instance.value(i, j).clone() / instance.ros_target(i).clone(),
                                ));
                            }
                        }
                    }
                    lp.constrain(
                        row,
                        Rel::Le,
                        lay.forced_value[i].clone() / instance.ros_target(i).clone(),
                    );
                    if let Some(bud) = instance.budget(i) {
                        lp.constrain(vec![(welfare_aux[i], Q::one())], Rel::Le, bud.clone());
                    }
                }
            } else {
                for i in 0..n {
                    constant += lay.forced_value[i].clone() / instance.ros_target(i).clone();
                }
                for (j, item) in table.items.iter().enumerate() {
                    if lay.vars[j].is_empty() {
                        continue;
                    }
                    for (pos, (i, _)) in item.bidders.iter().enumerate() {
                        coeffs.push((
                            lay.vars[j][pos],
                            instance.value(*i, j).clone() / instance.ros_target(*i).clone(),
                        ));
                    }
                }
            }
        }
        WitnessObjective::Revenue => {
            for (j, item) in table.items.iter().enumerate() {
                if lay.vars[j].is_empty() && lay.pseudo_vars[j].is_none() {
                    if !lay.forced_pseudo[j] {
                        constant += item.clearing_price.clone();
                    }
                    continue;
                }
                constant += item.clearing_price.clone();
                if let Some(v) = lay.pseudo_vars[j] {
                    coeffs.push((v, -item.clearing_price.clone()));
                }
            }
        }
        WitnessObjective::Allocation(entries) => {
            for (i, j, w) in entries {
                let item = &table.items[*j];
                if lay.vars[*j].is_empty() {
                    if item.bidders.first().map(|(b_i, _)| b_i) == Some(i) {
                        constant += w.clone();
                    }
                    continue;
                }
                for (pos, (b_i, _)) in item.bidders.iter().enumerate() {
                    if b_i == i {
                        coeffs.push((lay.vars[*j][pos], w.clone()));
                    }
                }
            }
        }
    }
    if !maximize {
        for (_, c) in &mut coeffs {
            *c = -c.clone();
        }
    }
    lp.set_objective(coeffs);

    match lp.maximize() {
        LpResult::Optimal { objective: obj, point } => {
            let value = if maximize { constant + obj } else { constant - obj };
            let outcome = assemble_outcome(instance, &table, &lay, &point);
            // welfare minimization under finite budgets: report the clamped
            // liquid welfare of the minimizing witness
            let value = match objective {
                WitnessObjective::Welfare if !maximize && !instance.is_plain() => {
                    liquid_welfare(instance, &outcome)?
                }
                _ => value,
            };
            Ok(Some((value, outcome)))
        }
        LpResult::Infeasible => Ok(None),
        LpResult::Unbounded => unreachable!("witness polytope is bounded"),
    }
}

/// Sufficient extremal test for a conservative embedding of `inner` into
/// `outer`: no mapped bidder can ever touch an unmapped item and vice versa,
/// because a same-side bid at multiplier one (or the reserve) strictly beats
/// the crossing bidder's capped bid.
pub fn check_conservative_extension(
    inner: &AutobiddingInstance,
    outer: &AutobiddingInstance,
    bidder_map: &[usize],
    item_map: &[usize],
) -> Result<bool> {
    if bidder_map.len() != inner.n() || item_map.len() != inner.k() {
        return Err(Error::InconsistentMaps("map lengths".into()));
    }
    let mut seen_b = vec![false; outer.n()];
    for &b in bidder_map {
        if b >= outer.n() || std::mem::replace(&mut seen_b[b], true) {
            return Err(Error::InconsistentMaps("bidder map not injective".into()));
        }
    }
    let mut seen_i = vec![false; outer.k()];
    for &j in item_map {
        if j >= outer.k() || std::mem::replace(&mut seen_i[j], true) {
            return Err(Error::InconsistentMaps("item map not injective".into()));
        }
    }
    if inner.cap() != outer.cap() {
        return Err(Error::InconsistentMaps("caps differ".into()));
    }
    for (i, &bi) in bidder_map.iter().enumerate() {
        for (j, &bj) in item_map.iter().enumerate() {
            if inner.value(i, j) != outer.value(bi, bj) {
                return Err(Error::InconsistentMaps(format!("value mismatch at inner ({i}, {j})")));
            }
        }
    }
    for (j, &bj) in item_map.iter().enumerate() {
        if inner.reserve(j) != outer.reserve(bj) {
            return Err(Error::InconsistentMaps(format!("reserve mismatch at inner item {j}")));
        }
    }

    let outer_only_bidders: Vec<usize> = (0..outer.n()).filter(|i| !seen_b[*i]).collect();
    let outer_only_items: Vec<usize> = (0..outer.k()).filter(|j| !seen_i[*j]).collect();

    let defended = |crossers: &[usize], defenders: &[usize], item: usize| -> bool {
        let mut defense = outer.reserve(item).clone();
        for &d in defenders {
            if *outer.value(d, item) > defense {
                defense = outer.value(d, item).clone();
            }
        }
        crossers
            .iter()
            .all(|&c| outer.value(c, item).clone() * outer.cap().clone() < defense)
    };

    let ok = outer_only_items.iter().all(|&j| defended(bidder_map, &outer_only_bidders, j))
        && item_map.iter().all(|&j| defended(&outer_only_bidders, bidder_map, j));
    Ok(ok)
}

/// Finite per-bidder candidate sets, approximation slack, and an enumeration
/// budget.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub candidates: Vec<Vec<Q>>,
    pub beta: Q,
    pub budget: u128,
}

impl GridSpec {
    pub const DEFAULT_BUDGET: u128 = 1_000_000;

    /// The same candidate set for every bidder; 1 and the cap are always
    /// included and out-of-range points are dropped.
    pub fn uniform(instance: &AutobiddingInstance, mut points: Vec<Q>, beta: Q) -> Self {
        points.push(Q::one());
        points.push(instance.cap().clone());
        points.retain(|p| *p >= Q::one() && p <= instance.cap());
        points.sort();
        points.dedup();
        GridSpec { candidates: vec![points; instance.n()], beta, budget: Self::DEFAULT_BUDGET }
    }

    /// Arithmetic progression with `step` between 1 and the cap.
    pub fn with_step(instance: &AutobiddingInstance, step: &Q, beta: Q) -> Self {
        let mut points = Vec::new();
        let mut m = Q::one();
        while m < *instance.cap() {
            points.push(m.clone());
            m += step.clone();
        }
        Self::uniform(instance, points, beta)
    }

    /// Powers of two between 1 and the cap.
    pub fn geometric(instance: &AutobiddingInstance, beta: Q) -> Self {
        let mut points = Vec::new();
        let mut m = Q::one();
        while m < *instance.cap() {
            points.push(m.clone());
            m = m * crate::rational::qi(2);
        }
        Self::uniform(instance, points, beta)
    }

    pub fn size(&self) -> u128 {
        self.candidates
            .iter()
            .map(|c| c.len() as u128)
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    fn profiles(&self) -> Vec<MultiplierProfile> {
        let n = self.candidates.len();
        let mut out = Vec::new();
        if self.candidates.iter().any(Vec::is_empty) {
            return out;
        }
        let mut idx = vec![0usize; n];
        loop {
            out.push(MultiplierProfile(
                idx.iter().enumerate().map(|(i, &c)| self.candidates[i][c].clone()).collect(),
            ));
            let mut pos = 0;
            loop {
                if pos == n {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] < self.candidates[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// A fixed list of profiles to verify, used for structured instances where
/// the product grid would be astronomically large.
#[derive(Clone, Debug)]
pub struct ExplicitGrid {
    pub profiles: Vec<MultiplierProfile>,
    pub beta: Q,
}

/// One accepted profile with the range of each objective over its witness
/// allocations.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub profile: MultiplierProfile,
    pub welfare_min: Q,
    pub welfare_max: Q,
    pub revenue_min: Q,
    pub revenue_max: Q,
    pub witness: AuctionOutcome,
}

/// Enumerates the grid and keeps the profiles accepted at slack `beta`,
/// annotated with the witness welfare and revenue ranges.
pub fn grid_search_equilibria(
    instance: &AutobiddingInstance,
    grid: &GridSpec,
) -> Result<Vec<GridPoint>> {
    let size = grid.size();
    if size > grid.budget {
        return Err(Error::BudgetExceeded { size, budget: grid.budget });
    }
    if grid.candidates.len() != instance.n() {
        return Err(Error::DimensionMismatch("one candidate set per bidder".into()));
    }
    for c in grid.candidates.iter().flatten() {
        if *c < Q::one() || c > instance.cap() {
            return Err(Error::ProfileOutOfRange("grid candidate outside [1, cap]".into()));
        }
    }
    search_profiles(instance, grid.profiles(), &grid.beta)
}

/// Verifies an explicit profile list (same annotations as the product grid).
pub fn search_explicit(
    instance: &AutobiddingInstance,
    grid: &ExplicitGrid,
) -> Result<Vec<GridPoint>> {
    search_profiles(instance, grid.profiles.clone(), &grid.beta)
}

fn search_profiles(
    instance: &AutobiddingInstance,
    profiles: Vec<MultiplierProfile>,
    beta: &Q,
) -> Result<Vec<GridPoint>> {
    let results: Vec<Result<Option<GridPoint>>> = profiles
        .into_par_iter()
        .map(|profile| {
            let verdict = check_approx_equilibrium(instance, &profile, beta)?;
            if !verdict.accepted {
                return Ok(None);
            }
            let (welfare_max, _) =
                optimize_witness(instance, &profile, beta, &WitnessObjective::Welfare, true)?
                    .expect("accepted profile has witnesses");
            let (welfare_min, witness) =
                optimize_witness(instance, &profile, beta, &WitnessObjective::Welfare, false)?
                    .expect("accepted profile has witnesses");
            let (revenue_max, _) =
                optimize_witness(instance, &profile, beta, &WitnessObjective::Revenue, true)?
                    .expect("accepted profile has witnesses");
            let (revenue_min, _) =
                optimize_witness(instance, &profile, beta, &WitnessObjective::Revenue, false)?
                    .expect("accepted profile has witnesses");
            Ok(Some(GridPoint {
                profile,
                welfare_min,
                welfare_max,
                revenue_min,
                revenue_max,
                witness,
            }))
        })
        .collect();
    let mut points = Vec::new();
    for r in results {
        if let Some(p) = r? {
            points.push(p);
        }
    }
    Ok(points)
}

/// Price-of-anarchy style ratios over a set of accepted equilibria.
#[derive(Clone, Debug)]
pub struct PoaReport {
    pub optimal_welfare: Q,
    pub min_welfare: Q,
    pub max_welfare: Q,
    pub min_revenue: Q,
    pub max_revenue: Q,
    /// `optimal_welfare / min_welfare`; `None` when the denominator is zero.
    pub poa_sample: Option<Q>,
    /// `max_welfare / welfare` per equilibrium, in input order.
    pub welfare_rhos: Vec<Option<Q>>,
    /// `max_revenue / revenue` per equilibrium, in input order.
    pub revenue_rhos: Vec<Option<Q>>,
}

pub fn poa_report(instance: &AutobiddingInstance, points: &[GridPoint]) -> Result<PoaReport> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty equilibrium set".into()));
    }
    let optimal = optimal_welfare(instance);
    let min_welfare = points.iter().map(|p| p.welfare_min.clone()).min().unwrap();
    let max_welfare = points.iter().map(|p| p.welfare_max.clone()).max().unwrap();
    let min_revenue = points.iter().map(|p| p.revenue_min.clone()).min().unwrap();
    let max_revenue = points.iter().map(|p| p.revenue_max.clone()).max().unwrap();
    let ratio = |num: &Q, den: &Q| -> Option<Q> { (!den.is_zero()).then(|| num.clone() / den.clone()) };
    Ok(PoaReport {
        poa_sample: ratio(&optimal, &min_welfare),
        welfare_rhos: points.iter().map(|p| ratio(&max_welfare, &p.welfare_min)).collect(),
        revenue_rhos: points.iter().map(|p| ratio(&max_revenue, &p.revenue_min)).collect(),
        optimal_welfare: optimal,
        min_welfare,
        max_welfare,
        min_revenue,
        max_revenue,
    })
}
