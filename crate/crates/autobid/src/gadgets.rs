//! Compilation of label-cover constraint systems into autobidding instances.
//!
//! Per vertex, an assignment block lets at most one label multiplier sit at
//! the cap. Per edge and label, a NAND block followed by a NOT block turns
//! the pair of assignment multipliers into a conjunction indicator, and an
//! edge bidder's price on its dedicated item reads off the disjunction over
//! labels. A welfare-mode incumbent item per edge adds the inefficient
//! capture that separates good equilibria from bad ones. Gadget-internal
//! values are scaled down by `eta` so their welfare and revenue are a
//! vanishing accounting term; edge and incumbent items are full stakes.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};

use crate::model::{AutobiddingInstance, MultiplierProfile};
use crate::rational::{qi, Q};
use crate::{Error, Result};

/// Bipartite constraint graph with one projection per edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCoverInstance {
    pub left: usize,
    pub right: usize,
    /// `(u, v, projection)`: the edge is satisfied when
    /// `projection[label(u)] == label(v)`.
    pub edges: Vec<(usize, usize, Vec<usize>)>,
    pub sigma: usize,
}

impl LabelCoverInstance {
    pub fn validate(&self) -> Result<()> {
        if self.sigma == 0 {
            return Err(Error::InvalidParameter("empty alphabet".into()));
        }
        for (idx, (u, v, proj)) in self.edges.iter().enumerate() {
            if *u >= self.left || *v >= self.right {
                return Err(Error::InvalidLabel(format!("edge {idx} endpoint out of range")));
            }
            if proj.len() != self.sigma || proj.iter().any(|s| *s >= self.sigma) {
                return Err(Error::InvalidLabel(format!("edge {idx} projection not total")));
            }
        }
        Ok(())
    }

    /// Total vertex count; right vertices follow the left ones.
    pub fn vertices(&self) -> usize {
        self.left + self.right
    }

    pub fn global_right(&self, v: usize) -> usize {
        self.left + v
    }
}

/// Number of edges satisfied by a (possibly partial) labeling over the
/// global vertex order.
pub fn csp_value(lc: &LabelCoverInstance, labeling: &[Option<usize>]) -> Result<usize> {
    if labeling.len() != lc.vertices() {
        return Err(Error::DimensionMismatch("labeling length".into()));
    }
    for l in labeling.iter().flatten() {
        if *l >= lc.sigma {
            return Err(Error::InvalidLabel(format!("label {l} outside the alphabet")));
        }
    }
    Ok(lc
        .edges
        .iter()
        .filter(|(u, v, proj)| {
            matches!(
                (labeling[*u], labeling[lc.global_right(*v)]),
                (Some(a), Some(b)) if proj[a] == b
            )
        })
        .count())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Objective {
    Revenue,
    Welfare,
}

/// How reserve prices are realized in the compiled instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReserveMode {
    /// Keep them as per-item pseudo-bidders.
    Native,
    /// Replace each one by the two-bidder simulation block.
    Expanded,
}

/// Reduction constants: cap `M`, anchor value `K`, down-scaling `eta`, and
/// the optional signal accuracy `gamma`.
#[derive(Clone, Debug)]
pub struct ReductionParams {
    pub epsilon: Q,
    pub delta: Q,
    pub cap: Q,
    pub anchor: Q,
    /// Gadget scale; `None` means "pick the instance-dependent default at
    /// compile time".
    pub eta: Option<Q>,
    pub gamma: Option<Q>,
    pub objective: Objective,
}

impl ReductionParams {
    /// `M = (1+eps)/delta`, `K = 6 M |Sigma| / eps`; `eta` is left to the
    /// compiler, which evaluates the instance-size bound.
    pub fn derive(epsilon: Q, delta: Q, sigma: usize, objective: Objective) -> Result<Self> {
        if !epsilon.is_positive() || epsilon >= Q::one() {
            return Err(Error::InvalidParameter("epsilon must lie in (0, 1)".into()));
        }
        if !delta.is_positive() || delta >= Q::one() {
            return Err(Error::InvalidParameter("delta must lie in (0, 1)".into()));
        }
        if sigma < 2 {
            return Err(Error::InvalidParameter("alphabet needs at least two labels".into()));
        }
        let cap = (Q::one() + epsilon.clone()) / delta.clone();
        let anchor = qi(6) * cap.clone() * qi(sigma as i64) / epsilon.clone();
        Ok(ReductionParams { epsilon, delta, cap, anchor, eta: None, gamma: None, objective })
    }

    /// Explicit constants for standalone gadget blocks. The full-compile
    /// soundness preconditions are asserted by `compile`, not here.
    pub fn explicit(
        epsilon: Q,
        delta: Q,
        cap: Q,
        anchor: Q,
        objective: Objective,
    ) -> Result<Self> {
        if !epsilon.is_positive() || epsilon >= Q::one() {
            return Err(Error::InvalidParameter("epsilon must lie in (0, 1)".into()));
        }
        if !delta.is_positive() || delta >= Q::one() {
            return Err(Error::InvalidParameter("delta must lie in (0, 1)".into()));
        }
        if cap < Q::one() || !anchor.is_positive() {
            return Err(Error::InvalidParameter("cap below 1 or non-positive anchor".into()));
        }
        Ok(ReductionParams { epsilon, delta, cap, anchor, eta: None, gamma: None, objective })
    }

    pub fn with_gamma(mut self, gamma: Q) -> Result<Self> {
        if gamma.is_negative() || gamma >= Q::one() {
            return Err(Error::InvalidParameter("gamma must lie in [0, 1)".into()));
        }
        self.gamma = Some(gamma);
        Ok(self)
    }

    pub fn with_eta(mut self, eta: Q) -> Result<Self> {
        if !eta.is_positive() {
            return Err(Error::InvalidParameter("eta must be positive".into()));
        }
        self.eta = Some(eta);
        Ok(self)
    }

    /// Largest scale that keeps total gadget revenue below `delta |E|`:
    /// `delta |E| / (|V| (|Sigma| M + K) + 5 |E| |Sigma|)`.
    pub fn eta_bound(&self, vertices: usize, edges: usize, sigma: usize) -> Q {
        let denom = qi(vertices as i64)
            * (qi(sigma as i64) * self.cap.clone() + self.anchor.clone())
            + qi(5) * qi(edges as i64) * qi(sigma as i64);
        self.delta.clone() * qi(edges.max(1) as i64) / denom
    }

    /// Interior multiplier of the no-label assignment equilibrium,
    /// `(M |Sigma| + K) / (|Sigma| + K)`.
    pub fn interior_multiplier(&self, sigma: usize) -> Q {
        (self.cap.clone() * qi(sigma as i64) + self.anchor.clone())
            / (qi(sigma as i64) + self.anchor.clone())
    }

    /// Bound on the runner-up multiplier when some label is at the cap,
    /// `1 + (M + |Sigma|) / K`.
    pub fn runner_up_bound(&self, sigma: usize) -> Q {
        Q::one() + (self.cap.clone() + qi(sigma as i64)) / self.anchor.clone()
    }
}

/// What a compiled bidder stands for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BidderRole {
    /// Assignment bidder for `(vertex, label)`.
    Assign { vertex: usize, sigma: usize },
    /// Conjunction-negation output for `(edge, label)`.
    NandOut { edge: usize, sigma: usize },
    /// Negation output for `(edge, label)`; at the cap iff the pair is set.
    NotOut { edge: usize, sigma: usize },
    Edge { edge: usize },
    Incumbent { edge: usize },
    /// Clause bidder of a cover-style compilation.
    Clause { clause: usize },
    ClauseIncumbent { clause: usize },
    /// Reserve-simulation pair attached to `item`; `which` is 1 or 2.
    ReserveAux { item: usize, which: u8 },
}

impl BidderRole {
    pub fn key(&self) -> String {
        match self {
            BidderRole::Assign { vertex, sigma } => format!("assign:{vertex}:{sigma}"),
            BidderRole::NandOut { edge, sigma } => format!("nand:{edge}:{sigma}"),
            BidderRole::NotOut { edge, sigma } => format!("not:{edge}:{sigma}"),
            BidderRole::Edge { edge } => format!("edge:{edge}"),
            BidderRole::Incumbent { edge } => format!("incumbent:{edge}"),
            BidderRole::Clause { clause } => format!("clause:{clause}"),
            BidderRole::ClauseIncumbent { clause } => format!("incumbent-clause:{clause}"),
            BidderRole::ReserveAux { item, which } => format!("reserve-aux:{item}:{which}"),
        }
    }

    pub fn parse(key: &str) -> Option<BidderRole> {
        let parts: Vec<&str> = key.split(':').collect();
        let num = |s: &str| s.parse::<usize>().ok();
        match parts.as_slice() {
            ["assign", a, b] => Some(BidderRole::Assign { vertex: num(a)?, sigma: num(b)? }),
            ["nand", a, b] => Some(BidderRole::NandOut { edge: num(a)?, sigma: num(b)? }),
            ["not", a, b] => Some(BidderRole::NotOut { edge: num(a)?, sigma: num(b)? }),
            ["edge", a] => Some(BidderRole::Edge { edge: num(a)? }),
            ["incumbent", a] => Some(BidderRole::Incumbent { edge: num(a)? }),
            ["clause", a] => Some(BidderRole::Clause { clause: num(a)? }),
            ["incumbent-clause", a] => Some(BidderRole::ClauseIncumbent { clause: num(a)? }),
            ["reserve-aux", a, b] => {
                Some(BidderRole::ReserveAux { item: num(a)?, which: num(b)? as u8 })
            }
            _ => None,
        }
    }
}

/// What a compiled item stands for. `slot` numbers items inside one gadget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ItemRole {
    AssignLabel { vertex: usize, sigma: usize },
    AssignAnchor { vertex: usize },
    Nand { edge: usize, sigma: usize, slot: u8 },
    Not { edge: usize, sigma: usize, slot: u8 },
    EdgeItem { edge: usize },
    IncumbentItem { edge: usize },
    ClauseItem { clause: usize },
    ClauseIncumbentItem { clause: usize },
    ReserveAuxItem { item: usize, which: u8 },
}

impl ItemRole {
    pub fn key(&self) -> String {
        match self {
            ItemRole::AssignLabel { vertex, sigma } => format!("assign-item:{vertex}:{sigma}"),
            ItemRole::AssignAnchor { vertex } => format!("assign-anchor:{vertex}"),
            ItemRole::Nand { edge, sigma, slot } => format!("nand-item:{edge}:{sigma}:{slot}"),
            ItemRole::Not { edge, sigma, slot } => format!("not-item:{edge}:{sigma}:{slot}"),
            ItemRole::EdgeItem { edge } => format!("edge-item:{edge}"),
            ItemRole::IncumbentItem { edge } => format!("incumbent-item:{edge}"),
            ItemRole::ClauseItem { clause } => format!("clause-item:{clause}"),
            ItemRole::ClauseIncumbentItem { clause } => format!("incumbent-clause-item:{clause}"),
            ItemRole::ReserveAuxItem { item, which } => format!("reserve-aux-item:{item}:{which}"),
        }
    }
}

/// Compiled instance plus the bookkeeping that ties bidders and items back
/// to the source constraint system.
#[derive(Clone, Debug)]
pub struct CompiledInstance {
    pub instance: AutobiddingInstance,
    pub bidder_roles: Vec<BidderRole>,
    pub item_roles: Vec<ItemRole>,
    /// Vertex (or variable) count and alphabet size of the source.
    pub vertices: usize,
    pub sigma: usize,
    pub edges: usize,
    /// Reserves awaiting expansion; empty once expanded or when compiled in
    /// native mode (where they live on the instance).
    pub reserve_registry: Vec<(usize, Q)>,
    pub params: CompiledParams,
}

/// Echo of every constant a report needs to reproduce a compilation.
#[derive(Clone, Debug)]
pub struct CompiledParams {
    pub epsilon: Q,
    /// Error parameters the conjunction chain was emitted with. The full
    /// compiler budgets `eps/6` for NAND blocks and `eps/2` for NOT blocks
    /// so the accumulated error at the edge layer stays within `eps`;
    /// standalone fragments use `eps` for both.
    pub nand_epsilon: Q,
    pub not_epsilon: Q,
    pub delta: Option<Q>,
    pub cap: Q,
    pub anchor: Q,
    pub eta: Q,
    pub gamma: Option<Q>,
    pub lambda: Option<Q>,
    pub mu: Option<Q>,
    pub objective: Objective,
}

impl CompiledInstance {
    pub fn bidder_with_role(&self, role: &BidderRole) -> Result<usize> {
        self.bidder_roles
            .iter()
            .position(|r| r == role)
            .ok_or_else(|| Error::MissingRole(role.key()))
    }

    pub fn item_with_role(&self, role: &ItemRole) -> Result<usize> {
        self.item_roles
            .iter()
            .position(|r| r == role)
            .ok_or_else(|| Error::MissingRole(role.key()))
    }

    pub fn assign_bidders(&self, vertex: usize) -> Vec<usize> {
        (0..self.sigma)
            .filter_map(|s| {
                self.bidder_with_role(&BidderRole::Assign { vertex, sigma: s }).ok()
            })
            .collect()
    }
}

/// Growing instance under construction.
struct Builder {
    entries: BTreeMap<(usize, usize), Q>,
    bidder_roles: Vec<BidderRole>,
    item_roles: Vec<ItemRole>,
    reserves: Vec<(usize, Q)>,
    cap: Q,
}

impl Builder {
    fn new(cap: Q) -> Self {
        Builder {
            entries: BTreeMap::new(),
            bidder_roles: Vec::new(),
            item_roles: Vec::new(),
            reserves: Vec::new(),
            cap,
        }
    }

    fn add_bidder(&mut self, role: BidderRole) -> usize {
        self.bidder_roles.push(role);
        self.bidder_roles.len() - 1
    }

    fn add_item(&mut self, role: ItemRole) -> usize {
        self.item_roles.push(role);
        self.item_roles.len() - 1
    }

    fn set(&mut self, bidder: usize, item: usize, value: Q) {
        if !value.is_zero() {
            self.entries.insert((bidder, item), value);
        }
    }

    fn register_reserve(&mut self, item: usize, r: Q) {
        if r.is_positive() {
            self.reserves.push((item, r));
        }
    }

    /// Assignment block: one bidder per label, one item per label, and the
    /// anchor item every label values `eta K`.
    fn emit_label_assignment(&mut self, vertex: usize, sigma: usize, p: &ReductionParams, eta: &Q) -> Vec<usize> {
        let bidders: Vec<usize> = (0..sigma)
            .map(|s| self.add_bidder(BidderRole::Assign { vertex, sigma: s }))
            .collect();
        for s in 0..sigma {
            let item = self.add_item(ItemRole::AssignLabel { vertex, sigma: s });
            for (b_pos, &b) in bidders.iter().enumerate() {
                let v = if b_pos == s { p.cap.clone() } else { Q::one() };
                self.set(b, item, v * eta.clone());
            }
        }
        let anchor = self.add_item(ItemRole::AssignAnchor { vertex });
        for &b in &bidders {
            self.set(b, anchor, p.anchor.clone() * eta.clone());
        }
        bidders
    }

    /// NAND block with its own error parameter `eps`: the output wins the
    /// two input-facing items outright, and two reserved items meter its
    /// multiplier against the truth table.
    fn emit_nand(
        &mut self,
        edge: usize,
        sigma: usize,
        input1: usize,
        input2: usize,
        eps: &Q,
        cap: &Q,
        eta: &Q,
    ) -> usize {
        let out = self.add_bidder(BidderRole::NandOut { edge, sigma });
        let half = Q::one() / qi(2);
        let half_eps = half.clone() + eps.clone();
        let tiny = Q::one() / (qi(2) * cap.clone());
        let i1 = self.add_item(ItemRole::Nand { edge, sigma, slot: 1 });
        self.set(input1, i1, tiny.clone() * eta.clone());
        self.set(out, i1, half_eps.clone() * eta.clone());
        let i2 = self.add_item(ItemRole::Nand { edge, sigma, slot: 2 });
        self.set(input2, i2, tiny.clone() * eta.clone());
        self.set(out, i2, half_eps * eta.clone());
        let i3 = self.add_item(ItemRole::Nand { edge, sigma, slot: 3 });
        self.set(out, i3, eta.clone());
        self.register_reserve(i3, (Q::one() + qi(3) * eps.clone()) * eta.clone());
        let i4 = self.add_item(ItemRole::Nand { edge, sigma, slot: 4 });
        self.set(out, i4, tiny * eta.clone());
        self.register_reserve(i4, half * eta.clone());
        out
    }

    /// NOT block with its own error parameter `eps`.
    fn emit_not(
        &mut self,
        edge: usize,
        sigma: usize,
        input: usize,
        eps: &Q,
        cap: &Q,
        eta: &Q,
    ) -> usize {
        let out = self.add_bidder(BidderRole::NotOut { edge, sigma });
        let inv = Q::one() / cap.clone();
        let i1 = self.add_item(ItemRole::Not { edge, sigma, slot: 1 });
        self.set(input, i1, inv.clone() * eta.clone());
        self.set(out, i1, (Q::one() + eps.clone()) * eta.clone());
        let i2 = self.add_item(ItemRole::Not { edge, sigma, slot: 2 });
        self.set(out, i2, eta.clone());
        self.register_reserve(i2, (Q::one() + qi(2) * eps.clone()) * eta.clone());
        let i3 = self.add_item(ItemRole::Not { edge, sigma, slot: 3 });
        self.set(out, i3, inv * eta.clone());
        self.register_reserve(i3, eta.clone());
        out
    }

    /// Edge (or clause) item at full stakes: the owner values it `1 + eps`,
    /// every competitor `1/M`.
    fn emit_contest(
        &mut self,
        owner_role: BidderRole,
        item_role: ItemRole,
        competitors: &[usize],
        p: &ReductionParams,
    ) -> usize {
        let owner = self.add_bidder(owner_role);
        let item = self.add_item(item_role);
        self.set(owner, item, Q::one() + p.epsilon.clone());
        for &c in competitors {
            self.set(c, item, Q::one() / p.cap.clone());
        }
        owner
    }

    /// Incumbent item at full stakes: the contest owner values it
    /// `(1+eps)/M`, the incumbent values it 1.
    fn emit_incumbent(
        &mut self,
        owner: usize,
        incumbent_role: BidderRole,
        item_role: ItemRole,
        p: &ReductionParams,
    ) -> usize {
        let inc = self.add_bidder(incumbent_role);
        let item = self.add_item(item_role);
        self.set(owner, item, (Q::one() + p.epsilon.clone()) / p.cap.clone());
        self.set(inc, item, Q::one());
        inc
    }

    /// Per-item reserves from signal accuracy `gamma`: the extreme signal
    /// `gamma * v_ij`, folded per item as `gamma * max_i v_ij` and merged
    /// with any gadget reserve by maximum. `overrides` replaces the default
    /// signal on selected items.
    fn attach_signal_reserves(&mut self, gamma: &Q, overrides: &BTreeMap<usize, Q>) {
        let items = self.item_roles.len();
        let mut max_value = vec![Q::zero(); items];
        for ((_, j), v) in &self.entries {
            if *v > max_value[*j] {
                max_value[*j] = v.clone();
            }
        }
        for j in 0..items {
            let sig = overrides
                .get(&j)
                .cloned()
                .unwrap_or_else(|| gamma.clone() * max_value[j].clone());
            if !sig.is_positive() {
                continue;
            }
            match self.reserves.iter_mut().find(|(item, _)| *item == j) {
                Some((_, r)) if *r >= sig => {}
                Some((_, r)) => *r = sig,
                None => self.reserves.push((j, sig)),
            }
        }
    }

    fn finish(
        self,
        mode: ReserveMode,
        vertices: usize,
        sigma: usize,
        edges: usize,
        params: CompiledParams,
    ) -> Result<CompiledInstance> {
        let mut bidder_roles = self.bidder_roles;
        let mut item_roles = self.item_roles;
        let mut entries = self.entries;
        let mut registry = self.reserves;
        if mode == ReserveMode::Expanded {
            // two auxiliary bidders and two auxiliary items per reserve;
            // both aux bidders also bid on the target item
            for (target, r) in std::mem::take(&mut registry) {
                let a1 = bidder_roles.len();
                bidder_roles.push(BidderRole::ReserveAux { item: target, which: 1 });
                let a2 = bidder_roles.len();
                bidder_roles.push(BidderRole::ReserveAux { item: target, which: 2 });
                let i1 = item_roles.len();
                item_roles.push(ItemRole::ReserveAuxItem { item: target, which: 1 });
                let i2 = item_roles.len();
                item_roles.push(ItemRole::ReserveAuxItem { item: target, which: 2 });
                let half = r.clone() / qi(2);
                entries.insert((a1, i2), qi(2) * r.clone());
                entries.insert((a1, target), r.clone());
                entries.insert((a2, i1), half.clone());
                entries.insert((a2, i2), r.clone());
                entries.insert((a2, target), half);
            }
        }
        let n = bidder_roles.len();
        let k = item_roles.len();
        let mut values = vec![vec![Q::zero(); k]; n];
        for ((i, j), v) in entries {
            values[i][j] = v;
        }
        let mut instance = AutobiddingInstance::new(values, self.cap)?;
        if mode == ReserveMode::Native {
            let mut reserves = vec![Q::zero(); k];
            for (j, r) in &registry {
                if *r > reserves[*j] {
                    reserves[*j] = r.clone();
                }
            }
            instance = instance.with_reserves(reserves)?;
        }
        instance = instance.with_labels(crate::model::InstanceLabels {
            bidders: bidder_roles.iter().map(BidderRole::key).collect(),
            items: item_roles.iter().map(ItemRole::key).collect(),
        })?;
        Ok(CompiledInstance {
            instance,
            bidder_roles,
            item_roles,
            vertices,
            sigma,
            edges,
            reserve_registry: if mode == ReserveMode::Native { registry } else { Vec::new() },
            params,
        })
    }
}

/// Compiles a label-cover instance. Wiring: assignment block per vertex,
/// then per `(edge, label)` a NAND on the two endpoint assignment bidders
/// followed by a NOT, then one contested edge item per edge (plus an
/// incumbent item in welfare mode).
pub fn compile(
    lc: &LabelCoverInstance,
    params: &ReductionParams,
    mode: ReserveMode,
) -> Result<CompiledInstance> {
    lc.validate()?;
    if lc.sigma < 2 {
        return Err(Error::InvalidParameter("alphabet needs at least two labels".into()));
    }
    // soundness preconditions: M >= (1+eps)/delta and K >= 6 M |Sigma| / eps
    if params.cap.clone() * params.delta.clone() < Q::one() + params.epsilon.clone() {
        return Err(Error::InvalidParameter("cap below (1+eps)/delta".into()));
    }
    if params.anchor.clone() * params.epsilon.clone()
        < qi(6) * params.cap.clone() * qi(lc.sigma as i64)
    {
        return Err(Error::InvalidParameter("anchor below 6 M |Sigma| / eps".into()));
    }
    let eta = params
        .eta
        .clone()
        .unwrap_or_else(|| params.eta_bound(lc.vertices(), lc.edges.len(), lc.sigma));
    if !eta.is_positive() {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    // error budget along the conjunction chain: assignment runner-ups stay
    // within 1 + eps/6, NAND outputs within 1 + eps/2, NOT outputs within
    // 1 + eps
    let nand_eps = params.epsilon.clone() / qi(6);
    let not_eps = params.epsilon.clone() / qi(2);
    let mut b = Builder::new(params.cap.clone());
    let mut assign = Vec::new();
    for vertex in 0..lc.vertices() {
        assign.push(b.emit_label_assignment(vertex, lc.sigma, params, &eta));
    }
    for (e, (u, v, proj)) in lc.edges.iter().enumerate() {
        let mut nots = Vec::new();
        for s in 0..lc.sigma {
            let in1 = assign[*u][s];
            let in2 = assign[lc.global_right(*v)][proj[s]];
            let nand = b.emit_nand(e, s, in1, in2, &nand_eps, &params.cap, &eta);
            nots.push(b.emit_not(e, s, nand, &not_eps, &params.cap, &eta));
        }
        let edge_bidder = b.emit_contest(
            BidderRole::Edge { edge: e },
            ItemRole::EdgeItem { edge: e },
            &nots,
            params,
        );
        if params.objective == Objective::Welfare {
            b.emit_incumbent(
                edge_bidder,
                BidderRole::Incumbent { edge: e },
                ItemRole::IncumbentItem { edge: e },
                params,
            );
        }
    }
    if let Some(gamma) = &params.gamma {
        b.attach_signal_reserves(gamma, &BTreeMap::new());
    }
    let compiled_params = CompiledParams {
        epsilon: params.epsilon.clone(),
        nand_epsilon: nand_eps,
        not_epsilon: not_eps,
        delta: Some(params.delta.clone()),
        cap: params.cap.clone(),
        anchor: params.anchor.clone(),
        eta,
        gamma: params.gamma.clone(),
        lambda: None,
        mu: None,
        objective: params.objective,
    };
    b.finish(mode, lc.vertices(), lc.sigma, lc.edges.len(), compiled_params)
}

/// Replaces every registered reserve of a natively compiled instance by the
/// two-bidder simulation block; native reserves are cleared.
pub fn expand_reserves(compiled: &CompiledInstance) -> Result<CompiledInstance> {
    if compiled.reserve_registry.is_empty() {
        return Ok(compiled.clone());
    }
    let mut b = Builder::new(compiled.instance.cap().clone());
    b.bidder_roles = compiled.bidder_roles.clone();
    b.item_roles = compiled.item_roles.clone();
    for i in 0..compiled.instance.n() {
        for j in 0..compiled.instance.k() {
            let v = compiled.instance.value(i, j);
            if !v.is_zero() {
                b.entries.insert((i, j), v.clone());
            }
        }
    }
    b.reserves = compiled.reserve_registry.clone();
    b.finish(
        ReserveMode::Expanded,
        compiled.vertices,
        compiled.sigma,
        compiled.edges,
        compiled.params.clone(),
    )
}

/// Standalone assignment block (unscaled), for testing against the
/// dichotomy directly.
pub fn label_assignment_fragment(sigma: usize, params: &ReductionParams) -> Result<CompiledInstance> {
    if sigma < 2 {
        return Err(Error::InvalidParameter("alphabet needs at least two labels".into()));
    }
    let eta = params.eta.clone().unwrap_or_else(Q::one);
    let mut b = Builder::new(params.cap.clone());
    b.emit_label_assignment(0, sigma, params, &eta);
    b.finish(ReserveMode::Native, 1, sigma, 0, fragment_params(params, &eta))
}

/// Standalone NAND block: bidders `[input1, input2, output]`.
pub fn nand_fragment(params: &ReductionParams) -> Result<CompiledInstance> {
    let eta = params.eta.clone().unwrap_or_else(Q::one);
    let mut b = Builder::new(params.cap.clone());
    let in1 = b.add_bidder(BidderRole::Assign { vertex: 0, sigma: 0 });
    let in2 = b.add_bidder(BidderRole::Assign { vertex: 1, sigma: 0 });
    b.emit_nand(0, 0, in1, in2, &params.epsilon, &params.cap, &eta);
    b.finish(ReserveMode::Native, 2, 1, 1, fragment_params(params, &eta))
}

/// Standalone NOT block: bidders `[input, output]`.
pub fn not_fragment(params: &ReductionParams) -> Result<CompiledInstance> {
    let eta = params.eta.clone().unwrap_or_else(Q::one);
    let mut b = Builder::new(params.cap.clone());
    let input = b.add_bidder(BidderRole::Assign { vertex: 0, sigma: 0 });
    b.emit_not(0, 0, input, &params.epsilon, &params.cap, &eta);
    b.finish(ReserveMode::Native, 1, 1, 1, fragment_params(params, &eta))
}

/// Reserve-simulation block around a target item: bidders
/// `[aux1, aux2, target]` with the target bidder valuing its item `v`.
pub fn reserve_gadget_instance(r: &Q, target_value: &Q, cap: &Q) -> Result<AutobiddingInstance> {
    let half = r.clone() / qi(2);
    AutobiddingInstance::new(
        vec![
            vec![Q::zero(), qi(2) * r.clone(), r.clone()],
            vec![half.clone(), r.clone(), half],
            vec![Q::zero(), Q::zero(), target_value.clone()],
        ],
        cap.clone(),
    )
}

/// Edge bidder, one price-setting competitor, and the incumbent, at full
/// stakes: the miniature exhibiting both the efficient and the capture
/// equilibria. Items are `[edge item, incumbent item]`, bidders
/// `[competitor, edge, incumbent]`.
pub fn edge_incumbent_pair(epsilon: &Q, cap: &Q, gamma: Option<&Q>) -> Result<AutobiddingInstance> {
    let one_eps = Q::one() + epsilon.clone();
    let inst = AutobiddingInstance::new(
        vec![
            vec![Q::one() / cap.clone(), Q::zero()],
            vec![one_eps.clone(), one_eps.clone() / cap.clone()],
            vec![Q::zero(), Q::one()],
        ],
        cap.clone(),
    )?;
    match gamma {
        None => Ok(inst),
        Some(g) => inst.with_reserves(vec![g.clone() * one_eps, g.clone()]),
    }
}

fn fragment_params(params: &ReductionParams, eta: &Q) -> CompiledParams {
    CompiledParams {
        epsilon: params.epsilon.clone(),
        nand_epsilon: params.epsilon.clone(),
        not_epsilon: params.epsilon.clone(),
        delta: Some(params.delta.clone()),
        cap: params.cap.clone(),
        anchor: params.anchor.clone(),
        eta: eta.clone(),
        gamma: params.gamma.clone(),
        lambda: None,
        mu: None,
        objective: params.objective,
    }
}

/// Reads a labeling from a multiplier profile: vertex `u` carries label `s`
/// iff its assignment multiplier reaches `threshold` (the cap by default).
/// Two qualifying labels on one vertex signal a non-equilibrium profile.
pub fn decode(
    compiled: &CompiledInstance,
    profile: &MultiplierProfile,
    threshold: Option<&Q>,
) -> Result<Vec<Option<usize>>> {
    profile.validate(&compiled.instance)?;
    let threshold = threshold.cloned().unwrap_or_else(|| compiled.params.cap.clone());
    let mut labeling = vec![None; compiled.vertices];
    for (i, role) in compiled.bidder_roles.iter().enumerate() {
        if let BidderRole::Assign { vertex, sigma } = role {
            if *profile.get(i) >= threshold {
                if let Some(prev) = labeling[*vertex] {
                    return Err(Error::AmbiguousDecode(format!(
                        "vertex {vertex}: labels {prev} and {sigma} both qualify"
                    )));
                }
                labeling[*vertex] = Some(*sigma);
            }
        }
    }
    Ok(labeling)
}

/// The canonical equilibrium profile induced by a (possibly partial)
/// labeling:
/// - labeled vertices are one-hot at the cap, unlabeled ones sit at the
///   interior all-equal multiplier;
/// - NAND outputs are `1 + 3 eps` when both inputs are at the cap, else at
///   the cap; NOT outputs invert that;
/// - edge bidders burn their surplus against the incumbent when the edge is
///   satisfied (welfare mode) and cap out otherwise; incumbents stay at 1;
/// - reserve-simulation bidders sit at their forced pair `(1, 2)`.
pub fn completeness_profile(
    compiled: &CompiledInstance,
    lc: &LabelCoverInstance,
    labeling: &[Option<usize>],
) -> Result<MultiplierProfile> {
    if labeling.len() != compiled.vertices {
        return Err(Error::DimensionMismatch("labeling length".into()));
    }
    let p = &compiled.params;
    let interior = (p.cap.clone() * qi(compiled.sigma as i64) + p.anchor.clone())
        / (qi(compiled.sigma as i64) + p.anchor.clone());
    let one_eps = Q::one() + p.epsilon.clone();
    let pair_set = |e: usize, s: usize| -> bool {
        let (u, v, proj) = &lc.edges[e];
        labeling[*u] == Some(s) && labeling[lc.global_right(*v)] == Some(proj[s])
    };
    let edge_satisfied =
        |e: usize| -> bool { (0..compiled.sigma).any(|s| pair_set(e, s)) };
    let mut m = Vec::with_capacity(compiled.instance.n());
    for role in &compiled.bidder_roles {
        let v = match role {
            BidderRole::Assign { vertex, sigma } => match labeling[*vertex] {
                Some(l) if l == *sigma => p.cap.clone(),
                Some(_) => Q::one(),
                None => interior.clone(),
            },
            BidderRole::NandOut { edge, sigma } => {
                if pair_set(*edge, *sigma) {
                    Q::one() + qi(3) * p.nand_epsilon.clone()
                } else {
                    p.cap.clone()
                }
            }
            BidderRole::NotOut { edge, sigma } => {
                if pair_set(*edge, *sigma) {
                    p.cap.clone()
                } else {
                    Q::one() + qi(2) * p.not_epsilon.clone()
                }
            }
            BidderRole::Edge { edge } => {
                if p.objective == Objective::Welfare && edge_satisfied(*edge) {
                    p.cap.clone() / one_eps.clone()
                } else {
                    p.cap.clone()
                }
            }
            BidderRole::Incumbent { .. } | BidderRole::ClauseIncumbent { .. } => Q::one(),
            BidderRole::Clause { .. } => p.cap.clone(),
            BidderRole::ReserveAux { which, .. } => {
                if *which == 1 {
                    Q::one()
                } else {
                    qi(2)
                }
            }
        };
        m.push(v);
    }
    Ok(MultiplierProfile(m))
}

/// Every labeling over `vertices` with entries from the alphabet plus
/// "unlabeled" — the candidate family grid searches enumerate on compiled
/// instances.
pub fn all_partial_labelings(vertices: usize, sigma: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = Vec::new();
    let base = sigma + 1;
    let total = base.checked_pow(vertices as u32).unwrap_or(0);
    for mut code in 0..total {
        let mut labeling = Vec::with_capacity(vertices);
        for _ in 0..vertices {
            let digit = code % base;
            labeling.push(if digit == sigma { None } else { Some(digit) });
            code /= base;
        }
        out.push(labeling);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{check_conservative_extension, check_equilibrium};
    use crate::rational::q;

    fn params_10_300() -> ReductionParams {
        // explicit constants sized for desk tests
        ReductionParams::explicit(q(1, 10), q(1, 2), qi(10), qi(300), Objective::Revenue).unwrap()
    }

    #[test]
    fn derive_matches_the_recipes() {
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 3, Objective::Revenue).unwrap();
        assert_eq!(p.cap, qi(22));
        assert_eq!(p.anchor, qi(3960));
        // |V|=2, |E|=1: eta bound = (1/20) / (2 (3*22 + 3960) + 15)
        assert_eq!(p.eta_bound(2, 1, 3), q(1, 20) / qi(2 * (66 + 3960) + 15));
    }

    #[test]
    fn derive_rejects_degenerate_parameters() {
        assert!(ReductionParams::derive(qi(0), q(1, 2), 2, Objective::Revenue).is_err());
        assert!(ReductionParams::derive(q(1, 2), qi(1), 2, Objective::Revenue).is_err());
        assert!(ReductionParams::derive(q(1, 2), q(1, 2), 1, Objective::Revenue).is_err());
        assert!(
            ReductionParams::explicit(q(1, 10), q(1, 2), q(1, 2), qi(300), Objective::Revenue)
                .is_err()
        );
    }

    #[test]
    fn assignment_fragment_layout_and_scaling() {
        let p = params_10_300();
        let frag = label_assignment_fragment(2, &p).unwrap();
        assert_eq!(frag.instance.n(), 2);
        assert_eq!(frag.instance.k(), 3);
        assert_eq!(frag.instance.value(0, 0), &qi(10));
        assert_eq!(frag.instance.value(0, 1), &qi(1));
        assert_eq!(frag.instance.value(0, 2), &qi(300));
        assert_eq!(frag.instance.value(1, 1), &qi(10));
        // linearity in eta: the eta = 2 fragment is the eta = 1 one doubled
        let p2 = p.clone().with_eta(qi(2)).unwrap();
        let frag2 = label_assignment_fragment(2, &p2).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(
                    frag2.instance.value(i, j).clone(),
                    frag.instance.value(i, j).clone() * qi(2)
                );
            }
        }
    }

    #[test]
    fn assignment_fragment_one_hot_is_accepted() {
        let p = params_10_300();
        let frag = label_assignment_fragment(2, &p).unwrap();
        let profile = MultiplierProfile(vec![qi(10), qi(1)]);
        assert!(check_equilibrium(&frag.instance, &profile).unwrap().accepted);
    }

    #[test]
    fn nand_fragment_matches_the_table() {
        let p = params_10_300();
        let frag = nand_fragment(&p).unwrap();
        assert_eq!(frag.instance.n(), 3);
        assert_eq!(frag.instance.k(), 4);
        assert_eq!(frag.instance.value(0, 0), &q(1, 20));
        assert_eq!(frag.instance.value(1, 1), &q(1, 20));
        assert_eq!(frag.instance.value(2, 0), &q(3, 5)); // 1/2 + 1/10
        assert_eq!(frag.instance.value(2, 2), &qi(1));
        assert_eq!(frag.instance.value(2, 3), &q(1, 20));
        assert_eq!(frag.instance.reserve(2), &q(13, 10)); // 1 + 3/10
        assert_eq!(frag.instance.reserve(3), &q(1, 2));
    }

    #[test]
    fn not_fragment_matches_the_table() {
        let p = params_10_300();
        let frag = not_fragment(&p).unwrap();
        assert_eq!(frag.instance.n(), 2);
        assert_eq!(frag.instance.k(), 3);
        assert_eq!(frag.instance.value(0, 0), &q(1, 10));
        assert_eq!(frag.instance.value(1, 0), &q(11, 10));
        assert_eq!(frag.instance.value(1, 1), &qi(1));
        assert_eq!(frag.instance.value(1, 2), &q(1, 10));
        assert_eq!(frag.instance.reserve(1), &q(6, 5)); // 1 + 2/10
        assert_eq!(frag.instance.reserve(2), &qi(1));
    }

    fn one_edge_cover() -> LabelCoverInstance {
        LabelCoverInstance { left: 1, right: 1, edges: vec![(0, 0, vec![0, 1])], sigma: 2 }
    }

    #[test]
    fn compile_counts_bidders_and_items() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Welfare).unwrap();
        let native = compile(&lc, &p, ReserveMode::Native).unwrap();
        // 4 assignment + 2 nand + 2 not + edge + incumbent
        assert_eq!(native.instance.n(), 10);
        // 6 assignment + 8 nand + 6 not + edge + incumbent
        assert_eq!(native.instance.k(), 22);
        assert_eq!(native.reserve_registry.len(), 8);
        let expanded = expand_reserves(&native).unwrap();
        assert_eq!(expanded.instance.n(), 26);
        assert_eq!(expanded.instance.k(), 38);
        assert!(expanded.reserve_registry.is_empty());
        assert!(expanded.instance.reserves().iter().all(num::Zero::is_zero));
        // revenue mode drops exactly |E| bidders and |E| items
        let p_rev = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue).unwrap();
        let rev = compile(&lc, &p_rev, ReserveMode::Native).unwrap();
        assert_eq!(native.instance.n() - rev.instance.n(), lc.edges.len());
        assert_eq!(native.instance.k() - rev.instance.k(), lc.edges.len());
    }

    #[test]
    fn compile_rejects_bad_projections() {
        let lc = LabelCoverInstance { left: 1, right: 1, edges: vec![(0, 0, vec![0, 7])], sigma: 2 };
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue).unwrap();
        assert!(compile(&lc, &p, ReserveMode::Native).is_err());
    }

    #[test]
    fn csp_value_examples() {
        let empty = LabelCoverInstance { left: 1, right: 1, edges: vec![], sigma: 2 };
        assert_eq!(csp_value(&empty, &[Some(0), Some(1)]).unwrap(), 0);
        let lc = one_edge_cover();
        assert_eq!(csp_value(&lc, &[Some(1), Some(1)]).unwrap(), 1);
        assert_eq!(csp_value(&lc, &[Some(1), Some(0)]).unwrap(), 0);
        assert_eq!(csp_value(&lc, &[None, Some(0)]).unwrap(), 0);
        assert!(csp_value(&lc, &[Some(3), Some(0)]).is_err());
    }

    #[test]
    fn csp_value_agrees_with_exhaustive_search() {
        // 3-edge instance; oracle enumerates all labelings by hand
        let lc = LabelCoverInstance {
            left: 2,
            right: 1,
            edges: vec![
                (0, 0, vec![0, 1, 2]),
                (1, 0, vec![1, 1, 0]),
                (0, 0, vec![2, 2, 2]),
            ],
            sigma: 3,
        };
        let mut best = 0;
        let mut oracle_best = 0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let labeling = vec![Some(a), Some(b), Some(c)];
                    let got = csp_value(&lc, &labeling).unwrap();
                    let mut expect = 0;
                    if lc.edges[0].2[a] == c {
                        expect += 1;
                    }
                    if lc.edges[1].2[b] == c {
                        expect += 1;
                    }
                    if lc.edges[2].2[a] == c {
                        expect += 1;
                    }
                    assert_eq!(got, expect);
                    best = best.max(got);
                    oracle_best = oracle_best.max(expect);
                }
            }
        }
        assert_eq!(best, oracle_best);
    }

    #[test]
    fn decode_reads_back_the_one_hot_profile() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue).unwrap();
        let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
        let all_ones = MultiplierProfile::ones(compiled.instance.n());
        assert_eq!(decode(&compiled, &all_ones, None).unwrap(), vec![None, None]);
        let labeling = vec![Some(1), Some(1)];
        let profile = completeness_profile(&compiled, &lc, &labeling).unwrap();
        assert_eq!(decode(&compiled, &profile, None).unwrap(), labeling);
    }

    #[test]
    fn decode_flags_double_labels() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue).unwrap();
        let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
        let mut m = MultiplierProfile::ones(compiled.instance.n());
        let b0 = compiled.bidder_with_role(&BidderRole::Assign { vertex: 0, sigma: 0 }).unwrap();
        let b1 = compiled.bidder_with_role(&BidderRole::Assign { vertex: 0, sigma: 1 }).unwrap();
        m.0[b0] = compiled.params.cap.clone();
        m.0[b1] = compiled.params.cap.clone();
        assert!(matches!(decode(&compiled, &m, None), Err(Error::AmbiguousDecode(_))));
    }

    #[test]
    fn satisfying_profile_is_an_equilibrium_of_the_compiled_instance() {
        let lc = one_edge_cover();
        for objective in [Objective::Revenue, Objective::Welfare] {
            let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, objective).unwrap();
            let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
            for labeling in [vec![Some(0), Some(0)], vec![Some(1), Some(0)], vec![None, None]] {
                let profile = completeness_profile(&compiled, &lc, &labeling).unwrap();
                let v = check_equilibrium(&compiled.instance, &profile).unwrap();
                assert!(
                    v.accepted,
                    "{objective:?} {labeling:?}: {:?} residual {:?}",
                    v.violated, v.residual
                );
            }
        }
    }

    #[test]
    fn edge_item_price_reads_off_satisfaction() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue).unwrap();
        let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
        let edge_item = compiled.item_with_role(&ItemRole::EdgeItem { edge: 0 }).unwrap();
        // satisfied: price 1; unsatisfied: price at most (1+eps)/M
        let sat = completeness_profile(&compiled, &lc, &[Some(0), Some(0)]).unwrap();
        let clearing = crate::auction::clear(&compiled.instance, &sat).unwrap();
        assert_eq!(clearing.0[edge_item].price, qi(1));
        let unsat = completeness_profile(&compiled, &lc, &[Some(0), Some(1)]).unwrap();
        let clearing = crate::auction::clear(&compiled.instance, &unsat).unwrap();
        let bound = (Q::one() + p.epsilon.clone()) / p.cap.clone();
        assert!(clearing.0[edge_item].price <= bound);
        // decoded labeling's satisfied count matches the unit-price items
        let decoded = decode(&compiled, &sat, None).unwrap();
        assert_eq!(csp_value(&lc, &decoded).unwrap(), 1);
    }

    #[test]
    fn gadget_blocks_embed_conservatively() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Welfare).unwrap();
        let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
        let eta = compiled.params.eta.clone();
        // the vertex-0 assignment block occupies bidders 0..2, items 0..3
        let frag = label_assignment_fragment(2, &p.clone().with_eta(eta).unwrap()).unwrap();
        let ok = check_conservative_extension(
            &frag.instance,
            &compiled.instance,
            &[0, 1],
            &[0, 1, 2],
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn expanded_and_native_reserves_price_the_target_alike() {
        // a reserve r on a single-bidder item vs its simulation block:
        // winner status and price paid by the target bidder must agree
        let r = q(3, 2);
        let v = qi(2);
        let cap = qi(4);
        for m_t in [qi(1), q(3, 2), qi(2), qi(4)] {
            let native = AutobiddingInstance::new(vec![vec![v.clone()]], cap.clone())
                .unwrap()
                .with_reserves(vec![r.clone()])
                .unwrap();
            let nc = crate::auction::clear(&native, &MultiplierProfile(vec![m_t.clone()])).unwrap();
            let expanded = reserve_gadget_instance(&r, &v, &cap).unwrap();
            let ec = crate::auction::clear(
                &expanded,
                &MultiplierProfile(vec![qi(1), qi(2), m_t.clone()]),
            )
            .unwrap();
            let native_wins = nc.0[0].winners.contains(&0);
            let expanded_wins = ec.0[2].winners.contains(&2);
            assert_eq!(native_wins, expanded_wins, "m_t = {m_t}");
            if native_wins {
                assert_eq!(nc.0[0].price, ec.0[2].price, "m_t = {m_t}");
            }
        }
    }

    #[test]
    fn partial_labelings_enumerate_the_whole_family() {
        let all = all_partial_labelings(2, 2);
        assert_eq!(all.len(), 9);
        assert!(all.contains(&vec![None, None]));
        assert!(all.contains(&vec![Some(1), Some(0)]));
    }

    #[test]
    fn gamma_mode_attaches_signal_reserves() {
        let lc = one_edge_cover();
        let p = ReductionParams::derive(q(1, 10), q(1, 20), 2, Objective::Revenue)
            .unwrap()
            .with_gamma(q(1, 2))
            .unwrap();
        let compiled = compile(&lc, &p, ReserveMode::Native).unwrap();
        let edge_item = compiled.item_with_role(&ItemRole::EdgeItem { edge: 0 }).unwrap();
        // signal reserve on the edge item: gamma * (1 + eps)
        assert_eq!(compiled.instance.reserve(edge_item), &(q(1, 2) * q(11, 10)));
        // gadget reserves that dominate the signal are kept; the compiled
        // NAND block runs at eps/6, so its metering reserve is 1 + eps/2
        let nand3 = compiled.item_with_role(&ItemRole::Nand { edge: 0, sigma: 0, slot: 3 }).unwrap();
        let eta = compiled.params.eta.clone();
        assert_eq!(compiled.instance.reserve(nand3), &(q(21, 20) * eta));
    }
}
