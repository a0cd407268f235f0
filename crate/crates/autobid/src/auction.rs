//! Clearing of parallel second-price auctions: bids, winner sets, prices,
//! and two deterministic allocation policies for simulation.

use num::{One, Zero};

use crate::lp::{LpProblem, Rel};
use crate::model::{AuctionOutcome, AutobiddingInstance, MultiplierProfile};
use crate::rational::Q;
use crate::Result;

/// Exact products `b_ij = m_i * v_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidMatrix(pub Vec<Vec<Q>>);

/// Winner set and price of one item.
///
/// The price is the second-highest value of the multiset
/// `{b_1j, ..., b_nj, reserve_j}`, i.e. the maximum with one copy of the
/// maximum removed. The pseudo-bidder joins the winner set only when the
/// reserve ties or exceeds every bid.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemClearing {
    pub winners: Vec<usize>,
    pub pseudo_wins: bool,
    pub max_bid: Q,
    pub price: Q,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clearing(pub Vec<ItemClearing>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllocationPolicy {
    /// Split every item uniformly among its real winners (the pseudo-bidder
    /// only takes items no real bidder ties on).
    EqualSplit,
    /// Solve for winner shares that bind every non-capped bidder's
    /// return-on-spend constraint; fall back to equal split when that linear
    /// system has no solution.
    RosBinding,
}

pub fn bids(instance: &AutobiddingInstance, profile: &MultiplierProfile) -> Result<BidMatrix> {
    profile.validate(instance)?;
    let rows = instance
        .values()
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|v| v.clone() * profile.get(i).clone()).collect())
        .collect();
    Ok(BidMatrix(rows))
}

pub fn clear(instance: &AutobiddingInstance, profile: &MultiplierProfile) -> Result<Clearing> {
    let b = bids(instance, profile)?;
    Ok(clear_bids(instance, &b))
}

pub(crate) fn clear_bids(instance: &AutobiddingInstance, b: &BidMatrix) -> Clearing {
    let (n, k) = (instance.n(), instance.k());
    let mut items = Vec::with_capacity(k);
    for j in 0..k {
        let reserve = instance.reserve(j);
        let mut max_bid = reserve.clone();
        for i in 0..n {
            if b.0[i][j] > max_bid {
                max_bid = b.0[i][j].clone();
            }
        }
        if max_bid.is_zero() && n > 0 {
            // all-zero column with zero reserve: the item is welfare-neutral,
            // hand it to the lowest-index bidder
            items.push(ItemClearing {
                winners: vec![0],
                pseudo_wins: false,
                max_bid,
                price: Q::zero(),
            });
            continue;
        }
        let winners: Vec<usize> = (0..n).filter(|&i| b.0[i][j] == max_bid).collect();
        let pseudo_wins = *reserve == max_bid || winners.is_empty();
        // second-highest of the full multiset: drop one copy of the maximum
        let mut seen_max = false;
        let mut price = Q::zero();
        let mut consider = |x: &Q| {
            if !seen_max && *x == max_bid {
                seen_max = true;
            } else if *x > price {
                price = x.clone();
            }
        };
        consider(reserve);
        for i in 0..n {
            consider(&b.0[i][j]);
        }
        items.push(ItemClearing { winners, pseudo_wins, max_bid, price });
    }
    Clearing(items)
}

pub fn allocate(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
    policy: AllocationPolicy,
) -> Result<AuctionOutcome> {
    let clearing = clear(instance, profile)?;
    let equal = equal_split(instance, &clearing);
    match policy {
        AllocationPolicy::EqualSplit => Ok(equal),
        AllocationPolicy::RosBinding => {
            Ok(ros_binding(instance, profile, &clearing).unwrap_or(equal))
        }
    }
}

/// Outcome price convention: items held entirely by the pseudo-bidder are
/// recorded at price zero (they produce no revenue either way).
fn outcome_price(item: &ItemClearing) -> Q {
    if item.winners.is_empty() {
        Q::zero()
    } else {
        item.price.clone()
    }
}

fn equal_split(instance: &AutobiddingInstance, clearing: &Clearing) -> AuctionOutcome {
    let (n, k) = (instance.n(), instance.k());
    let mut allocation = vec![vec![Q::zero(); k]; n];
    let mut reserve_shares = vec![Q::zero(); k];
    let mut prices = Vec::with_capacity(k);
    for (j, item) in clearing.0.iter().enumerate() {
        if item.winners.is_empty() {
            reserve_shares[j] = Q::one();
        } else {
            let share = Q::one() / Q::from_integer(item.winners.len().into());
            for &i in &item.winners {
                allocation[i][j] = share.clone();
            }
        }
        prices.push(outcome_price(item));
    }
    AuctionOutcome { allocation, reserve_shares, prices }
}

/// Shares over winner sets that make every non-capped bidder's RoS
/// constraint exactly tight. `None` when the system is infeasible.
fn ros_binding(
    instance: &AutobiddingInstance,
    profile: &MultiplierProfile,
    clearing: &Clearing,
) -> Option<AuctionOutcome> {
    let (n, k) = (instance.n(), instance.k());
    // variables: one share per (item, winner) pair on contested items plus a
    // pseudo share where the reserve ties; single-winner items are forced
    let mut var_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k]; // (winner, var)
    let mut pseudo_var: Vec<Option<usize>> = vec![None; k];
    let mut forced_surplus = vec![Q::zero(); n];
    let mut num_vars = 0;
    for (j, item) in clearing.0.iter().enumerate() {
        let contested = item.winners.len() + usize::from(item.pseudo_wins) > 1;
        if !contested {
            if let Some(&i) = item.winners.first() {
                let gain = instance.value(i, j).clone() - item.price.clone();
                forced_surplus[i] += gain;
            }
            continue;
        }
        for &i in &item.winners {
            var_of[j].push((i, num_vars));
            num_vars += 1;
        }
        if item.pseudo_wins {
            pseudo_var[j] = Some(num_vars);
            num_vars += 1;
        }
    }

    let mut lp = LpProblem::new(num_vars);
    for j in 0..k {
        if var_of[j].is_empty() && pseudo_var[j].is_none() {
            continue;
        }
        let mut row: Vec<(usize, Q)> =
            var_of[j].iter().map(|&(_, v)| (v, Q::one())).collect();
        if let Some(v) = pseudo_var[j] {
            row.push((v, Q::one()));
        }
        lp.constrain(row, Rel::Eq, Q::one());
    }
    for i in 0..n {
        if profile.get(i) == instance.cap() {
            continue;
        }
        let mut row: Vec<(usize, Q)> = Vec::new();
        for j in 0..k {
            for &(w, v) in &var_of[j] {
                if w == i {
                    let coeff = instance.value(i, j).clone() - clearing.0[j].price.clone();
                    row.push((v, coeff));
                }
            }
        }
        if row.is_empty() {
            if !forced_surplus[i].is_zero() {
                return None;
            }
            continue;
        }
        lp.constrain(row, Rel::Eq, -forced_surplus[i].clone());
    }

    let point = lp.feasible_point()?;
    let mut allocation = vec![vec![Q::zero(); k]; n];
    let mut reserve_shares = vec![Q::zero(); k];
    let mut prices = Vec::with_capacity(k);
    for (j, item) in clearing.0.iter().enumerate() {
        let contested = item.winners.len() + usize::from(item.pseudo_wins) > 1;
        if contested {
            for &(w, v) in &var_of[j] {
                allocation[w][j] = point[v].clone();
            }
            if let Some(v) = pseudo_var[j] {
                reserve_shares[j] = point[v].clone();
            }
        } else if let Some(&i) = item.winners.first() {
            allocation[i][j] = Q::one();
        } else {
            reserve_shares[j] = Q::one();
        }
        prices.push(outcome_price(item));
    }
    Some(AuctionOutcome { allocation, reserve_shares, prices })
}
