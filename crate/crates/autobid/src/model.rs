//! Instance model: bidders with additive valuations, items with reserve
//! prices, multiplier caps, and the welfare / revenue functionals.
//!
//! Reserve prices are treated as a pseudo-bidder per item that bids the
//! reserve at a fixed price and has no return-on-spend constraint; this keeps
//! "all items fully allocated" literally true even when an item goes unsold.

use num::{One, Signed, Zero};

use crate::lp::{LpProblem, LpResult, Rel};
use crate::rational::Q;
use crate::{Error, Result};

/// A parallel second-price market: `n` bidders, `k` items.
#[derive(Clone, Debug, PartialEq)]
pub struct AutobiddingInstance {
    values: Vec<Vec<Q>>,
    reserves: Vec<Q>,
    cap: Q,
    ros_targets: Vec<Q>,
    budgets: Vec<Option<Q>>, // None = unbounded
    labels: Option<InstanceLabels>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceLabels {
    pub bidders: Vec<String>,
    pub items: Vec<String>,
}

impl AutobiddingInstance {
    /// Builds an instance with zero reserves, unit targets, and unbounded
    /// budgets. `values` is row-per-bidder; rows must agree in length.
    pub fn new(values: Vec<Vec<Q>>, cap: Q) -> Result<Self> {
        let k = values.first().map_or(0, Vec::len);
        if values.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch("ragged value matrix".into()));
        }
        if values.iter().flatten().any(Signed::is_negative) {
            return Err(Error::InvalidParameter("negative valuation".into()));
        }
        if cap < Q::one() {
            return Err(Error::InvalidParameter("multiplier cap below 1".into()));
        }
        let n = values.len();
        Ok(AutobiddingInstance {
            values,
            reserves: vec![Q::zero(); k],
            cap,
            ros_targets: vec![Q::one(); n],
            budgets: vec![None; n],
            labels: None,
        })
    }

    pub fn with_reserves(mut self, reserves: Vec<Q>) -> Result<Self> {
        if reserves.len() != self.k() {
            return Err(Error::DimensionMismatch("reserve vector length".into()));
        }
        if reserves.iter().any(Signed::is_negative) {
            return Err(Error::InvalidParameter("negative reserve".into()));
        }
        self.reserves = reserves;
        Ok(self)
    }

    pub fn with_ros_targets(mut self, targets: Vec<Q>) -> Result<Self> {
        if targets.len() != self.n() {
            return Err(Error::DimensionMismatch("target vector length".into()));
        }
        if targets.iter().any(|t| *t < Q::one()) {
            return Err(Error::InvalidParameter("RoS target below 1".into()));
        }
        self.ros_targets = targets;
        Ok(self)
    }

    pub fn with_budgets(mut self, budgets: Vec<Option<Q>>) -> Result<Self> {
        if budgets.len() != self.n() {
            return Err(Error::DimensionMismatch("budget vector length".into()));
        }
        if budgets.iter().flatten().any(|b| !b.is_positive()) {
            return Err(Error::InvalidParameter("non-positive budget".into()));
        }
        self.budgets = budgets;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: InstanceLabels) -> Result<Self> {
        if labels.bidders.len() != self.n() || labels.items.len() != self.k() {
            return Err(Error::DimensionMismatch("label list length".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn cap(&self) -> &Q {
        &self.cap
    }

    pub fn value(&self, bidder: usize, item: usize) -> &Q {
        &self.values[bidder][item]
    }

    pub fn values(&self) -> &[Vec<Q>] {
        &self.values
    }

    pub fn reserve(&self, item: usize) -> &Q {
        &self.reserves[item]
    }

    pub fn reserves(&self) -> &[Q] {
        &self.reserves
    }

    pub fn ros_target(&self, bidder: usize) -> &Q {
        &self.ros_targets[bidder]
    }

    pub fn ros_targets(&self) -> &[Q] {
        &self.ros_targets
    }

    pub fn budget(&self, bidder: usize) -> Option<&Q> {
        self.budgets[bidder].as_ref()
    }

    pub fn budgets(&self) -> &[Option<Q>] {
        &self.budgets
    }

    pub fn labels(&self) -> Option<&InstanceLabels> {
        self.labels.as_ref()
    }

    /// Unit targets and unbounded budgets everywhere.
    pub fn is_plain(&self) -> bool {
        self.ros_targets.iter().all(|t| t.is_one()) && self.budgets.iter().all(Option::is_none)
    }
}

/// One multiplier per bidder, each in `[1, cap]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierProfile(pub Vec<Q>);

impl MultiplierProfile {
    pub fn ones(n: usize) -> Self {
        MultiplierProfile(vec![Q::one(); n])
    }

    pub fn validate(&self, instance: &AutobiddingInstance) -> Result<()> {
        if self.0.len() != instance.n() {
            return Err(Error::DimensionMismatch("profile length".into()));
        }
        for (i, m) in self.0.iter().enumerate() {
            if *m < Q::one() || *m > *instance.cap() {
                return Err(Error::ProfileOutOfRange(format!(
                    "bidder {i}: multiplier outside [1, cap]"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> &Q {
        &self.0[i]
    }
}

/// Allocation shares for every bidder plus the per-item pseudo-bidder share,
/// and the per-item prices.
#[derive(Clone, Debug, PartialEq)]
pub struct AuctionOutcome {
    pub allocation: Vec<Vec<Q>>,
    pub reserve_shares: Vec<Q>,
    pub prices: Vec<Q>,
}

impl AuctionOutcome {
    pub fn shape_matches(&self, instance: &AutobiddingInstance) -> Result<()> {
        let (n, k) = (instance.n(), instance.k());
        if self.allocation.len() != n
            || self.allocation.iter().any(|r| r.len() != k)
            || self.reserve_shares.len() != k
            || self.prices.len() != k
        {
            return Err(Error::DimensionMismatch("outcome shape".into()));
        }
        Ok(())
    }

    /// Full-allocation invariant: bidder shares plus the pseudo share sum to
    /// exactly one on every item.
    pub fn fully_allocated(&self) -> bool {
        (0..self.reserve_shares.len()).all(|j| {
            let total = self
                .allocation
                .iter()
                .map(|row| row[j].clone())
                .fold(self.reserve_shares[j].clone(), |a, b| a + b);
            total.is_one()
        })
    }

    /// Value obtained by one bidder.
    pub fn bidder_value(&self, instance: &AutobiddingInstance, i: usize) -> Q {
        (0..instance.k())
            .map(|j| self.allocation[i][j].clone() * instance.value(i, j).clone())
            .fold(Q::zero(), |a, b| a + b)
    }

    /// Payment made by one bidder.
    pub fn bidder_spend(&self, i: usize) -> Q {
        self.prices
            .iter()
            .zip(&self.allocation[i])
            .map(|(p, x)| p.clone() * x.clone())
            .fold(Q::zero(), |a, b| a + b)
    }
}

/// Supremum of liquid welfare over fractional allocations.
///
/// With unit targets and no budgets this is the sum of column maxima; in
/// general it is the optimum of a small linear program.
pub fn optimal_welfare(instance: &AutobiddingInstance) -> Q {
    let (n, k) = (instance.n(), instance.k());
    if n == 0 || k == 0 {
        return Q::zero();
    }
    if instance.is_plain() {
        return (0..k)
            .map(|j| (0..n).map(|i| instance.value(i, j).clone()).max().unwrap())
            .fold(Q::zero(), |a, b| a + b);
    }
    // variables: x_ij (n*k) then w_i (n); maximize sum w_i
    let xv = |i: usize, j: usize| i * k + j;
    let mut p = LpProblem::new(n * k + n);
    p.set_objective((0..n).map(|i| (n * k + i, Q::one())).collect());
    for j in 0..k {
        p.constrain((0..n).map(|i| (xv(i, j), Q::one())).collect(), Rel::Le, Q::one());
    }
    for i in 0..n {
        let mut row: Vec<(usize, Q)> = vec![(n * k + i, Q::one())];
        for j in 0..k {
            row.push((xv(i, j), -instance.value(i, j).clone() / instance.ros_target(i).clone()));
        }
        p.constrain(row, Rel::Le, Q::zero());
        if let Some(b) = instance.budget(i) {
            p.constrain(vec![(n * k + i, Q::one())], Rel::Le, b.clone());
        }
    }
    match p.maximize() {
        LpResult::Optimal { objective, .. } => objective,
        _ => unreachable!("welfare LP is feasible and bounded"),
    }
}

/// `sum_i min(B_i, value_i / tau_i)`; pseudo-bidder shares contribute zero.
pub fn liquid_welfare(instance: &AutobiddingInstance, outcome: &AuctionOutcome) -> Result<Q> {
    outcome.shape_matches(instance)?;
    let mut total = Q::zero();
    for i in 0..instance.n() {
        let v = outcome.bidder_value(instance, i) / instance.ros_target(i).clone();
        total += match instance.budget(i) {
            Some(b) if *b < v => b.clone(),
            _ => v,
        };
    }
    Ok(total)
}

/// Price times sold fraction, summed over items. The pseudo-bidder's share
/// pays nothing.
pub fn revenue(outcome: &AuctionOutcome) -> Q {
    outcome
        .prices
        .iter()
        .zip(&outcome.reserve_shares)
        .map(|(p, s)| p.clone() * (Q::one() - s.clone()))
        .fold(Q::zero(), |a, b| a + b)
}

/// Rescales all valuations and reserves by `eta > 0`; finite budgets scale
/// along, the cap and targets do not.
pub fn scale_instance(instance: &AutobiddingInstance, eta: &Q) -> Result<AutobiddingInstance> {
    if !eta.is_positive() {
        return Err(Error::InvalidParameter("scale factor must be positive".into()));
    }
    let values = instance
        .values
        .iter()
        .map(|row| row.iter().map(|v| v.clone() * eta.clone()).collect())
        .collect();
    let reserves = instance.reserves.iter().map(|r| r.clone() * eta.clone()).collect();
    let budgets = instance
        .budgets
        .iter()
        .map(|b| b.as_ref().map(|b| b.clone() * eta.clone()))
        .collect();
    let mut out = AutobiddingInstance::new(values, instance.cap.clone())?
        .with_reserves(reserves)?
        .with_ros_targets(instance.ros_targets.clone())?
        .with_budgets(budgets)?;
    out.labels = instance.labels.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    pub(crate) fn plain(values: Vec<Vec<Q>>, cap: Q) -> AutobiddingInstance {
        AutobiddingInstance::new(values, cap).unwrap()
    }

    #[test]
    fn optimal_welfare_empty_instance_is_zero() {
        let inst = plain(vec![], qi(2));
        assert_eq!(optimal_welfare(&inst), qi(0));
    }

    #[test]
    fn optimal_welfare_is_column_maximum() {
        let inst = plain(vec![vec![qi(3)], vec![qi(5)]], qi(2));
        assert_eq!(optimal_welfare(&inst), qi(5));
    }

    #[test]
    fn optimal_welfare_edge_incumbent_pair() {
        // epsilon = 1/10, cap = 10: rows ((1+e, (1+e)/M), (0, 1))
        let e = q(1, 10);
        let m = qi(10);
        let inst = plain(
            vec![
                vec![Q::one() + e.clone(), (Q::one() + e.clone()) / m.clone()],
                vec![qi(0), qi(1)],
            ],
            m,
        );
        assert_eq!(optimal_welfare(&inst), q(21, 10));
    }

    #[test]
    fn optimal_welfare_lp_respects_budgets() {
        let inst = plain(vec![vec![qi(7)]], qi(2))
            .with_budgets(vec![Some(qi(3))])
            .unwrap();
        assert_eq!(optimal_welfare(&inst), qi(3));
    }

    #[test]
    fn liquid_welfare_examples() {
        let inst = plain(vec![vec![qi(7)]], qi(2));
        let zero = AuctionOutcome {
            allocation: vec![vec![qi(0)]],
            reserve_shares: vec![qi(1)],
            prices: vec![qi(0)],
        };
        assert_eq!(liquid_welfare(&inst, &zero).unwrap(), qi(0));

        let full = AuctionOutcome {
            allocation: vec![vec![qi(1)]],
            reserve_shares: vec![qi(0)],
            prices: vec![qi(0)],
        };
        assert_eq!(liquid_welfare(&inst, &full).unwrap(), qi(7));

        // budget 3 clips the value of 7
        let capped = plain(vec![vec![qi(7)]], qi(2))
            .with_budgets(vec![Some(qi(3))])
            .unwrap();
        assert_eq!(liquid_welfare(&capped, &full).unwrap(), qi(3));
    }

    #[test]
    fn liquid_welfare_rejects_shape_mismatch() {
        let inst = plain(vec![vec![qi(1)]], qi(2));
        let bad = AuctionOutcome {
            allocation: vec![vec![qi(1), qi(0)]],
            reserve_shares: vec![qi(0), qi(0)],
            prices: vec![qi(0), qi(0)],
        };
        assert!(liquid_welfare(&inst, &bad).is_err());
    }

    #[test]
    fn revenue_examples() {
        let zero = AuctionOutcome {
            allocation: vec![vec![qi(1), qi(1)]],
            reserve_shares: vec![qi(0), qi(0)],
            prices: vec![qi(0), qi(0)],
        };
        assert_eq!(revenue(&zero), qi(0));

        let sold = AuctionOutcome {
            allocation: vec![vec![qi(1), qi(1)]],
            reserve_shares: vec![qi(0), qi(0)],
            prices: vec![qi(1), q(1, 2)],
        };
        assert_eq!(revenue(&sold), q(3, 2));

        // half the item held back by the pseudo-bidder at price 2 pays 1
        let half = AuctionOutcome {
            allocation: vec![vec![q(1, 2)]],
            reserve_shares: vec![q(1, 2)],
            prices: vec![qi(2)],
        };
        assert_eq!(revenue(&half), qi(1));
    }

    #[test]
    fn scaling_identity_and_doubling() {
        let inst = plain(vec![vec![qi(1), qi(2)]], qi(3));
        assert_eq!(scale_instance(&inst, &qi(1)).unwrap(), inst);
        let doubled = scale_instance(&inst, &qi(2)).unwrap();
        assert_eq!(doubled.value(0, 0), &qi(2));
        assert_eq!(doubled.value(0, 1), &qi(4));
        assert_eq!(doubled.cap(), &qi(3));
        assert!(scale_instance(&inst, &qi(0)).is_err());
    }

    #[test]
    fn scaling_scales_optimal_welfare_linearly() {
        let inst = plain(vec![vec![qi(1), qi(4)], vec![qi(2), qi(3)]], qi(5));
        let opt = optimal_welfare(&inst);
        for eta in [q(1, 3), qi(1), qi(7)] {
            let scaled = scale_instance(&inst, &eta).unwrap();
            assert_eq!(optimal_welfare(&scaled), opt.clone() * eta);
        }
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(AutobiddingInstance::new(vec![vec![qi(-1)]], qi(2)).is_err());
        assert!(AutobiddingInstance::new(vec![vec![qi(1)]], q(1, 2)).is_err());
        assert!(plain(vec![vec![qi(1)]], qi(2))
            .with_ros_targets(vec![q(1, 2)])
            .is_err());
        assert!(plain(vec![vec![qi(1)]], qi(2))
            .with_budgets(vec![Some(qi(0))])
            .is_err());
        let profile = MultiplierProfile(vec![qi(3)]);
        assert!(profile.validate(&plain(vec![vec![qi(1)]], qi(2))).is_err());
    }
}
