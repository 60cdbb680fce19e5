//! The simulation driver: provisioning, deployment, per-round establishment
//! over the current topology, mobility, and transcript capture.
//!
//! One `Simulation` is single-threaded and fully deterministic: every entity
//! draws from its own RNG stream derived from (seed, trial, lane), so trials
//! can run concurrently elsewhere without perturbing each other's bytes.
//!
//! Round semantics: `run_establishment_round` attempts every currently
//! adjacent eligible pair that does not yet share a key — regular-regular
//! pairs through the four-message handshake (the smaller id initiates, the
//! larger id answers and contacts the auxiliary), regular-auxiliary pairs
//! through the two-message exchange. Established keys persist across
//! mobility; a later round only fills in the links the topology newly offers.
//! Auxiliary-auxiliary adjacency is never attempted or counted, mirroring the
//! link accounting the connectivity formulas use.

use crate::crypto::{seeded_rng, NodeId};
use crate::netsim::{
    compute_field, deploy_auxiliary, deploy_auxiliary_uniform, deploy_regular, discover_aux_route,
    AuxPlacement, Boundary, FieldGeometry, MobilityModel, NetsimError, Pos, Role, TopologyGraph,
};
use crate::protocol::{AuxiliaryNodeState, ProtocolMessage, RegularNodeState, SetupServer};
use rand_chacha::ChaCha12Rng;

/// A responder's serving auxiliary plus the relay helper when it sits one
/// hop out; None when discovery found nothing within the hop budget.
type AuxRoute = Option<(NodeId, Option<NodeId>)>;

/// RNG stream layout: `stream = trial << 40 | lane`. Node lanes carry the
/// raw id; capture lanes carry the capture count. The bit offsets keep the
/// lane families disjoint for any plausible node count.
pub mod streams {
    pub const SETUP: u64 = 0;
    pub const DEPLOY_REGULAR: u64 = 1;
    pub const DEPLOY_AUX: u64 = 2;
    pub const CAPTURE_BASE: u64 = 1 << 35;
    pub const NODE_BASE: u64 = 1 << 36;

    pub fn for_trial(trial: u64, lane: u64) -> u64 {
        debug_assert!(lane < (1 << 40));
        (trial << 40) | lane
    }
}

/// Scenario parameters; the config file and CLI flags populate this.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: u64,
    pub m: u64,
    pub d: u64,
    pub rho_m: f64,
    pub boundary: Boundary,
    pub hops: u8,
    pub mobility_rounds: u32,
    pub mobility_step_factor: f64,
    pub seed: u64,
    pub trials: u32,
    pub aux_placement: AuxPlacement,
}

impl Default for SimConfig {
    /// The reference scenario: n=5000, m=500, d=80, ρ=30 m, toroidal field,
    /// direct phase only, one trial.
    fn default() -> Self {
        SimConfig {
            n: 5000,
            m: 500,
            d: 80,
            rho_m: 30.0,
            boundary: Boundary::Toroidal,
            hops: 0,
            mobility_rounds: 0,
            mobility_step_factor: 2.0,
            seed: 1,
            trials: 1,
            aux_placement: AuxPlacement::Cells,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), NetsimError> {
        if self.n < 1 || self.d < 1 {
            return Err(NetsimError::InvalidParam(format!(
                "n and d must be at least 1 (n={}, d={})",
                self.n, self.d
            )));
        }
        if self.rho_m.is_nan() || self.rho_m <= 0.0 {
            return Err(NetsimError::InvalidParam(format!(
                "rho_m must be positive ({})",
                self.rho_m
            )));
        }
        if self.hops > 1 {
            return Err(NetsimError::InvalidParam(format!(
                "hops must be 0 or 1 ({})",
                self.hops
            )));
        }
        if self.trials < 1 {
            return Err(NetsimError::InvalidParam("trials must be at least 1".into()));
        }
        if !(self.mobility_step_factor >= 0.0 && self.mobility_step_factor.is_finite()) {
            return Err(NetsimError::InvalidParam(format!(
                "mobility_step_factor must be finite and nonnegative ({})",
                self.mobility_step_factor
            )));
        }
        Ok(())
    }
}

/// Establishment counters for one round of one trial. `attempted` covers
/// every eligible adjacent pair that lacked a key when the round began;
/// conservation `attempted = direct_ok + supplemental_ok + failed` holds by
/// construction and is asserted in the tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundReport {
    pub trial: u64,
    pub round: u32,
    pub attempted: u64,
    pub direct_ok: u64,
    pub supplemental_ok: u64,
    pub failed: u64,
}

impl RoundReport {
    /// Fraction of this round's eligible links that ended secured.
    /// None when the round had nothing to attempt.
    pub fn empirical_p(&self) -> Option<f64> {
        if self.attempted == 0 {
            return None;
        }
        Some((self.direct_ok + self.supplemental_ok) as f64 / self.attempted as f64)
    }
}

/// One deterministic simulation instance (one trial).
pub struct Simulation {
    cfg: SimConfig,
    trial: u64,
    field: FieldGeometry,
    server: SetupServer,
    regulars: Vec<RegularNodeState>,
    auxes: Vec<AuxiliaryNodeState>,
    reg_pos: Vec<Pos>,
    aux_pos: Vec<Pos>,
    node_rngs: Vec<ChaCha12Rng>, // regulars 0..n, then auxiliaries
    round: u32,
    transcript: Option<Vec<String>>,
}

impl Simulation {
    /// Provision and deploy a fresh instance for the given trial index.
    pub fn new(cfg: &SimConfig, trial: u64) -> Result<Self, NetsimError> {
        cfg.validate()?;
        let field = compute_field(cfg.n, cfg.d, cfg.rho_m, cfg.boundary)?;
        let reg_pos = deploy_regular(
            cfg.n,
            &field,
            &mut seeded_rng(cfg.seed, streams::for_trial(trial, streams::DEPLOY_REGULAR)),
        );
        let aux_pos = if cfg.m == 0 {
            Vec::new()
        } else {
            let mut rng = seeded_rng(cfg.seed, streams::for_trial(trial, streams::DEPLOY_AUX));
            match cfg.aux_placement {
                AuxPlacement::Cells => deploy_auxiliary(cfg.m, &field, &mut rng),
                AuxPlacement::Uniform => deploy_auxiliary_uniform(cfg.m, &field, &mut rng),
            }
        };
        Self::with_positions(cfg, reg_pos, aux_pos, trial)
    }

    /// Build an instance over caller-supplied positions (hand-made fixtures).
    /// Position counts must match `cfg.n` and `cfg.m`; the field geometry is
    /// still derived from (n, d, ρ) unless the fixture overrides it via
    /// [`Simulation::with_field`].
    pub fn with_positions(
        cfg: &SimConfig,
        reg_pos: Vec<Pos>,
        aux_pos: Vec<Pos>,
        trial: u64,
    ) -> Result<Self, NetsimError> {
        cfg.validate()?;
        let field = compute_field(cfg.n, cfg.d, cfg.rho_m, cfg.boundary)?;
        Self::assemble(cfg, field, reg_pos, aux_pos, trial)
    }

    /// Fixture path with an explicit field geometry.
    pub fn with_field(
        cfg: &SimConfig,
        field: FieldGeometry,
        reg_pos: Vec<Pos>,
        aux_pos: Vec<Pos>,
        trial: u64,
    ) -> Result<Self, NetsimError> {
        cfg.validate()?;
        Self::assemble(cfg, field, reg_pos, aux_pos, trial)
    }

    fn assemble(
        cfg: &SimConfig,
        field: FieldGeometry,
        reg_pos: Vec<Pos>,
        aux_pos: Vec<Pos>,
        trial: u64,
    ) -> Result<Self, NetsimError> {
        if reg_pos.len() as u64 != cfg.n || aux_pos.len() as u64 != cfg.m {
            return Err(NetsimError::InvalidParam(format!(
                "position counts ({}, {}) do not match n={} m={}",
                reg_pos.len(),
                aux_pos.len(),
                cfg.n,
                cfg.m
            )));
        }
        let mut server = SetupServer::new(&mut seeded_rng(
            cfg.seed,
            streams::for_trial(trial, streams::SETUP),
        ));
        let mut regulars = Vec::with_capacity(cfg.n as usize);
        for raw in 0..cfg.n {
            regulars.push(
                server
                    .provision_regular(NodeId(raw))
                    .expect("fresh ids cannot collide"),
            );
        }
        let mut auxes = Vec::with_capacity(cfg.m as usize);
        for raw in cfg.n..cfg.n + cfg.m {
            auxes.push(
                server
                    .provision_auxiliary(NodeId(raw))
                    .expect("fresh ids cannot collide"),
            );
        }
        let node_rngs = (0..cfg.n + cfg.m)
            .map(|raw| {
                seeded_rng(
                    cfg.seed,
                    streams::for_trial(trial, streams::NODE_BASE | raw),
                )
            })
            .collect();
        Ok(Simulation {
            cfg: cfg.clone(),
            trial,
            field,
            server,
            regulars,
            auxes,
            reg_pos,
            aux_pos,
            node_rngs,
            round: 0,
            transcript: None,
        })
    }

    /// Record every delivered message as `src,dst,round,<hex>` lines.
    pub fn enable_transcript(&mut self) {
        self.transcript = Some(Vec::new());
    }

    pub fn transcript(&self) -> Option<&[String]> {
        self.transcript.as_deref()
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn field(&self) -> &FieldGeometry {
        &self.field
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn server(&self) -> &SetupServer {
        &self.server
    }

    pub fn regulars(&self) -> &[RegularNodeState] {
        &self.regulars
    }

    pub fn auxiliaries(&self) -> &[AuxiliaryNodeState] {
        &self.auxes
    }

    pub fn regular_positions(&self) -> &[Pos] {
        &self.reg_pos
    }

    pub fn auxiliary_positions(&self) -> &[Pos] {
        &self.aux_pos
    }

    /// Runtime node addition: provisions like the initial deployment and
    /// drops the node into the field at `pos`; it participates from the next
    /// establishment round on.
    pub fn add_regular_node(&mut self, pos: Pos) -> NodeId {
        let id = NodeId(self.next_raw_id());
        let node = self
            .server
            .add_regular_node(id)
            .expect("appended ids are fresh");
        self.regulars.push(node);
        self.reg_pos.push(pos);
        // node_rngs keeps regular streams first, auxiliary streams after
        self.node_rngs.insert(
            self.regulars.len() - 1,
            seeded_rng(
                self.cfg.seed,
                streams::for_trial(self.trial, streams::NODE_BASE | id.0),
            ),
        );
        id
    }

    /// Runtime auxiliary addition; carries the original special key.
    pub fn add_auxiliary_node(&mut self, pos: Pos) -> NodeId {
        let id = NodeId(self.next_raw_id());
        let node = self
            .server
            .add_auxiliary_node(id)
            .expect("appended ids are fresh");
        self.auxes.push(node);
        self.aux_pos.push(pos);
        self.node_rngs.push(seeded_rng(
            self.cfg.seed,
            streams::for_trial(self.trial, streams::NODE_BASE | id.0),
        ));
        id
    }

    fn next_raw_id(&self) -> u64 {
        // initial ids are 0..n (regular) and n..n+m (aux); additions continue
        // above the high-water mark regardless of role
        let mut next = self.cfg.n + self.cfg.m;
        for r in &self.regulars {
            next = next.max(r.id().0 + 1);
        }
        for a in &self.auxes {
            next = next.max(a.id().0 + 1);
        }
        next
    }

    fn build_topology(&self) -> TopologyGraph {
        let regs = self
            .regulars
            .iter()
            .zip(&self.reg_pos)
            .map(|(r, p)| (r.id(), Role::Regular, *p));
        let auxs = self
            .auxes
            .iter()
            .zip(&self.aux_pos)
            .map(|(a, p)| (a.id(), Role::Auxiliary, *p));
        TopologyGraph::build(self.field, regs.chain(auxs))
    }

    /// The adjacency the next establishment round would run over.
    pub fn topology(&self) -> TopologyGraph {
        self.build_topology()
    }

    fn log(&mut self, src: NodeId, dst: NodeId, msg: &ProtocolMessage) {
        if let Some(t) = &mut self.transcript {
            t.push(format!(
                "{},{},{},{}",
                src,
                dst,
                self.round,
                hex::encode(msg.encode())
            ));
        }
    }

    /// Move every regular node one mobility step (auxiliaries stay put) and
    /// advance the round counter.
    pub fn advance_mobility(&mut self) {
        let model = MobilityModel {
            max_step: self.cfg.mobility_step_factor * self.cfg.rho_m,
            rounds: self.cfg.mobility_rounds,
        };
        for (i, pos) in self.reg_pos.iter_mut().enumerate() {
            *pos = crate::netsim::move_regular(*pos, &model, &self.field, &mut self.node_rngs[i]);
        }
        self.round += 1;
    }

    /// Run establishment over the current topology (see the module docs for
    /// the exact pair semantics) and report this round's counters.
    pub fn run_establishment_round(&mut self) -> RoundReport {
        let topo = self.build_topology();
        let n_reg = self.regulars.len();
        let mut report = RoundReport {
            trial: self.trial,
            round: self.round,
            attempted: 0,
            direct_ok: 0,
            supplemental_ok: 0,
            failed: 0,
        };

        // responder → discovered route, memoized per round (inner Option:
        // the responder provably has no usable auxiliary)
        let mut routes: Vec<Option<AuxRoute>> = vec![None; n_reg];

        // Pass 1: regular-regular pairs, smaller id initiates. Engine vecs
        // are id-ordered, so topology index order is also id order and the
        // first n_reg topology indices are exactly the regulars.
        for ui in 0..n_reg as u32 {
            let peers: Vec<u32> = topo
                .neighbor_indices(ui)
                .iter()
                .copied()
                .filter(|&j| j > ui && (j as usize) < n_reg)
                .collect();
            for vi in peers {
                let v_id = topo.id_at(vi);
                if self.regulars[ui as usize].pairwise_key(v_id).is_some() {
                    continue;
                }
                report.attempted += 1;
                let route = *routes[vi as usize].get_or_insert_with(|| {
                    discover_aux_route(v_id, &topo, self.cfg.hops)
                        .expect("responder is in the topology")
                });
                self.case1(ui as usize, vi as usize, route, &topo, &mut report);
            }
        }

        // Pass 2: regular-auxiliary pairs (the regular requests).
        for ui in 0..n_reg as u32 {
            let adjacent_auxes: Vec<u32> = topo
                .neighbor_indices(ui)
                .iter()
                .copied()
                .filter(|&j| j as usize >= n_reg)
                .collect();
            for j in adjacent_auxes {
                let a_id = topo.id_at(j);
                if self.regulars[ui as usize].pairwise_key(a_id).is_some() {
                    continue;
                }
                report.attempted += 1;
                self.case2(ui as usize, j as usize - n_reg);
                report.direct_ok += 1;
            }
        }

        debug_assert_eq!(
            report.attempted,
            report.direct_ok + report.supplemental_ok + report.failed
        );
        report
    }

    /// One Case-1 attempt between the regulars at vec indices `u` and `v`.
    /// The initiator's opening message is sent before the responder looks
    /// for an auxiliary, so even a failed attempt leaves one message in the
    /// transcript.
    fn case1(
        &mut self,
        u: usize,
        v: usize,
        route: AuxRoute,
        topo: &TopologyGraph,
        report: &mut RoundReport,
    ) {
        let u_id = self.regulars[u].id();
        let v_id = self.regulars[v].id();
        let init = {
            let rng = &mut self.node_rngs[u];
            self.regulars[u]
                .initiate(v_id, rng)
                .expect("engine never self-pairs")
        };
        self.log(u_id, v_id, &ProtocolMessage::InitRequest(init.clone()));

        let Some((aux_id, helper)) = route else {
            report.failed += 1;
            return;
        };
        let a_rel = topo
            .index_of(aux_id)
            .expect("discovered auxiliary is in the topology") as usize
            - self.regulars.len();

        let req = {
            let rng = &mut self.node_rngs[v];
            self.regulars[v]
                .handle_init(&init, rng)
                .expect("engine never self-pairs")
        };
        let req_msg = ProtocolMessage::AuxRequest(req.clone());
        match helper {
            None => self.log(v_id, aux_id, &req_msg),
            Some(w) => {
                // the helping neighbor relays the request verbatim
                self.log(v_id, w, &req_msg);
                self.log(w, aux_id, &req_msg);
            }
        }

        let reply = {
            let aux_rng_idx = self.regulars.len() + a_rel;
            let rng = &mut self.node_rngs[aux_rng_idx];
            self.auxes[a_rel]
                .handle_request(&req, rng)
                .expect("honest responder's MAC verifies")
        };
        let reply_msg = ProtocolMessage::AuxReply(reply.clone());
        match helper {
            None => self.log(aux_id, v_id, &reply_msg),
            Some(w) => {
                self.log(aux_id, w, &reply_msg);
                self.log(w, v_id, &reply_msg);
            }
        }

        let fwd = self.regulars[v]
            .responder_handle_reply(&reply, u_id)
            .expect("pending transaction was just created");
        self.log(v_id, u_id, &ProtocolMessage::ForwardKey(fwd.clone()));
        self.regulars[u]
            .initiator_handle_forward(&fwd, v_id)
            .expect("pending transaction was just created");

        if helper.is_some() {
            report.supplemental_ok += 1;
        } else {
            report.direct_ok += 1;
        }
    }

    /// One Case-2 exchange between the regular at vec index `u` and the
    /// auxiliary at vec index `a_rel`; always succeeds under reliable
    /// delivery.
    fn case2(&mut self, u: usize, a_rel: usize) {
        let u_id = self.regulars[u].id();
        let a_id = self.auxes[a_rel].id();
        let req = self.regulars[u].aux_request();
        self.log(u_id, a_id, &ProtocolMessage::AuxDirectRequest(req.clone()));
        let reply = {
            let aux_rng_idx = self.regulars.len() + a_rel;
            let rng = &mut self.node_rngs[aux_rng_idx];
            self.auxes[a_rel].handle_direct(&req, rng)
        };
        self.log(a_id, u_id, &ProtocolMessage::AuxDirectReply(reply.clone()));
        self.regulars[u]
            .accept_direct(&reply, a_id)
            .expect("well-formed reply");
    }

    /// Round 0 plus one establishment round after each mobility step.
    pub fn run_all_rounds(&mut self) -> Vec<RoundReport> {
        let mut reports = vec![self.run_establishment_round()];
        for _ in 0..self.cfg.mobility_rounds {
            self.advance_mobility();
            reports.push(self.run_establishment_round());
        }
        reports
    }
}
