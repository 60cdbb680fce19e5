//! Connectivity formulas, empirical estimators, the capture adversary, and
//! the figure sweeps.
//!
//! Three closed forms drive everything analytic. With q = d/(m+n):
//!
//! * direct aux reachability  p′ = 1 − (1−q)^m — the chance a regular node
//!   has at least one auxiliary among its d neighbors;
//! * direct connectivity      p  = (m + n·p′)/(m+n) — Eq.-style link
//!   accounting where every aux-adjacent link counts as secured;
//! * one-hop boost            p₁ = p + (1−p)·(1 − (1−q)^{md}) — allowing the
//!   responder to reach an auxiliary through one helping neighbor.
//!
//! The (1−q)^k powers are evaluated as exp(k·ln(1+(−q))) to dodge
//! cancellation at small q. Empirical counterparts pool integer counters
//! across trials before dividing, so parallel sweeps stay bit-deterministic.
//!
//! The adversary is a passive harvester: capturing a node yields exactly the
//! keys that node stores. Whether a link between two surviving nodes is
//! compromised reduces to two checks — is the key value itself in the
//! harvested set, or is a master key of either endpoint known. The scheme's
//! claim is that the answer is always no, and the resilience report states
//! the measured fraction rather than assuming it.

use crate::crypto::{KeyMaterial, NodeId};
use crate::engine::{RoundReport, SimConfig, Simulation};
use rand::RngCore;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// An empirical fraction was requested for a round with no eligible links.
    #[error("no adjacent pairs to estimate over")]
    NoLinks,
}

impl From<crate::netsim::NetsimError> for AnalysisError {
    fn from(e: crate::netsim::NetsimError) -> Self {
        AnalysisError::InvalidParam(e.to_string())
    }
}

/// Population parameters the closed forms are evaluated over. Unlike the
/// simulator's config this allows d = 0 and even n = 0; the only hard
/// requirements are a nonempty population and d ≤ m+n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectivityParams {
    pub n: u64,
    pub m: u64,
    pub d: u64,
}

impl ConnectivityParams {
    fn validate(&self) -> Result<(), AnalysisError> {
        if self.m + self.n == 0 {
            return Err(AnalysisError::InvalidParam(
                "population m+n must be positive".into(),
            ));
        }
        if self.d > self.m + self.n {
            return Err(AnalysisError::InvalidParam(format!(
                "mean degree d={} exceeds population {}",
                self.d,
                self.m + self.n
            )));
        }
        Ok(())
    }

    fn q(&self) -> f64 {
        self.d as f64 / (self.m + self.n) as f64
    }
}

/// (1−q)^k without cancellation; k = 0 gives exactly 1.
fn pow_one_minus(q: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 1.0;
    }
    (k * (-q).ln_1p()).exp()
}

/// Probability that a regular node is directly adjacent to some auxiliary.
pub fn analytic_p_prime(params: ConnectivityParams) -> Result<f64, AnalysisError> {
    params.validate()?;
    if params.m == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - pow_one_minus(params.q(), params.m as f64))
}

/// Direct-phase network connectivity: the fraction of adjacent pairs
/// (regular-regular and regular-aux) expected to end up sharing a key.
pub fn analytic_p(params: ConnectivityParams) -> Result<f64, AnalysisError> {
    let p_prime = analytic_p_prime(params)?;
    let (m, n) = (params.m as f64, params.n as f64);
    Ok((m + n * p_prime) / (m + n))
}

/// Connectivity after the supplemental phase, where a responder may borrow
/// one neighbor's reach to contact an auxiliary.
pub fn analytic_p1(params: ConnectivityParams) -> Result<f64, AnalysisError> {
    let p = analytic_p(params)?;
    let boost = if params.m * params.d == 0 {
        0.0
    } else {
        1.0 - pow_one_minus(params.q(), (params.m * params.d) as f64)
    };
    Ok(p + (1.0 - p) * boost)
}

/// The measured counterpart of `analytic_p` for one round.
pub fn empirical_p(report: &RoundReport) -> Result<f64, AnalysisError> {
    report.empirical_p().ok_or(AnalysisError::NoLinks)
}

/// Everything the adversary has learned from a set of captures.
#[derive(Debug, Clone, Default)]
pub struct AdversaryKnowledge {
    captured: BTreeSet<NodeId>,
    learned_masters: BTreeMap<NodeId, KeyMaterial>,
    learned_pairwise: BTreeMap<(NodeId, NodeId), KeyMaterial>,
    learned_values: BTreeSet<[u8; 16]>,
}

impl AdversaryKnowledge {
    pub fn captured(&self) -> &BTreeSet<NodeId> {
        &self.captured
    }

    pub fn learned_masters(&self) -> &BTreeMap<NodeId, KeyMaterial> {
        &self.learned_masters
    }

    pub fn learned_pairwise(&self) -> &BTreeMap<(NodeId, NodeId), KeyMaterial> {
        &self.learned_pairwise
    }

    pub fn knows_value(&self, key: &KeyMaterial) -> bool {
        self.learned_values.contains(key.as_bytes())
    }
}

fn canonical_pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a.0 <= b.0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// Capture `c` regular nodes uniformly without replacement and harvest
/// everything they store: their master key and every pairwise key.
/// Auxiliaries are tamper-resistant and cannot be captured.
pub fn capture_nodes(
    sim: &Simulation,
    c: u64,
    rng: &mut impl RngCore,
) -> Result<AdversaryKnowledge, AnalysisError> {
    let regulars = sim.regulars();
    if c > regulars.len() as u64 {
        return Err(AnalysisError::InvalidParam(format!(
            "cannot capture {c} of {} regular nodes",
            regulars.len()
        )));
    }
    let picks = rand::seq::index::sample(rng, regulars.len(), c as usize);
    let mut know = AdversaryKnowledge::default();
    for idx in picks {
        let node = &regulars[idx];
        know.captured.insert(node.id());
        know.learned_masters.insert(node.id(), *node.master_key());
        know.learned_values.insert(*node.master_key().as_bytes());
        for (&peer, key) in node.pairwise_keys() {
            know.learned_pairwise
                .insert(canonical_pair(node.id(), peer), *key);
            know.learned_values.insert(*key.as_bytes());
        }
    }
    Ok(know)
}

/// Outcome of one capture experiment: how many links between *surviving*
/// nodes the adversary can read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResilienceReport {
    pub captured: u64,
    pub total_links: u64,
    pub compromised_links: u64,
    pub fraction: f64,
}

/// Enumerate every key-holding link whose endpoints are both uncaptured and
/// check it against the adversary's knowledge. A link counts as compromised
/// if its key value was harvested anywhere, or if a master key of either
/// endpoint is known (which would let the adversary re-derive the unmasking
/// keystream from the recorded handshake).
pub fn resilience(knowledge: &AdversaryKnowledge, sim: &Simulation) -> ResilienceReport {
    let mut total = 0u64;
    let mut compromised = 0u64;
    let aux_ids: BTreeSet<NodeId> = sim.auxiliaries().iter().map(|a| a.id()).collect();
    for node in sim.regulars() {
        if knowledge.captured.contains(&node.id()) {
            continue;
        }
        for (&peer, key) in node.pairwise_keys() {
            let is_aux = aux_ids.contains(&peer);
            if is_aux {
                // aux links appear once, on the regular side
            } else {
                // regular-regular links appear in both endpoint maps; count
                // them from the smaller id, and skip links whose other
                // endpoint fell to the adversary
                if peer.0 < node.id().0 || knowledge.captured.contains(&peer) {
                    continue;
                }
            }
            total += 1;
            let master_known = knowledge.learned_masters.contains_key(&node.id())
                || knowledge.learned_masters.contains_key(&peer);
            if knowledge.knows_value(key) || master_known {
                compromised += 1;
            }
        }
    }
    ResilienceReport {
        captured: knowledge.captured.len() as u64,
        total_links: total,
        compromised_links: compromised,
        fraction: if total == 0 {
            0.0
        } else {
            compromised as f64 / total as f64
        },
    }
}

/// Which figure a curve point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl FigureId {
    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Analytic,
    Empirical,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Analytic => "analytic",
            PointKind::Empirical => "empirical",
        }
    }
}

/// One (x, y) sample on one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub figure: FigureId,
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub kind: PointKind,
}

/// The standard sweep grid: d ∈ {20,…,100}, m/n ∈ {0.01,…,0.10} at n = 5000.
pub const GRID_N: u64 = 5000;
pub const GRID_D: [u64; 5] = [20, 40, 60, 80, 100];

pub fn grid_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}

/// Evaluate Eq.-side curves over the grid. Fig. 1 plots direct connectivity
/// p; Fig. 2 plots the supplemental-phase p₁. One series per d value.
pub fn sweep_analytic(
    figure: FigureId,
    n: u64,
    d_values: &[u64],
    ratios: &[f64],
) -> Result<Vec<CurvePoint>, AnalysisError> {
    if d_values.is_empty() || ratios.is_empty() {
        return Err(AnalysisError::InvalidParam("empty sweep grid".into()));
    }
    let eval: fn(ConnectivityParams) -> Result<f64, AnalysisError> = match figure {
        FigureId::Fig1 => analytic_p,
        FigureId::Fig2 => analytic_p1,
        _ => {
            return Err(AnalysisError::InvalidParam(
                "analytic sweeps cover fig1 and fig2".into(),
            ))
        }
    };
    let mut points = Vec::with_capacity(d_values.len() * ratios.len());
    for &d in d_values {
        for &ratio in ratios {
            let m = (ratio * n as f64).round() as u64;
            let y = eval(ConnectivityParams { n, m, d })?;
            points.push(CurvePoint {
                figure,
                series: format!("d={d}"),
                x: m as f64 / n as f64,
                y,
                kind: PointKind::Analytic,
            });
        }
    }
    Ok(points)
}

/// Monte-Carlo counterpart for Figs. 3 and 4: for each m, run
/// `base.trials` independent trials and pool the integer counters before
/// dividing. Fig. 3 measures the initial establishment round; Fig. 4 runs
/// `base.mobility_rounds` mobility steps with re-establishment and measures
/// the final round. Each empirical point is paired with its analytic value
/// so the curves plot side by side.
pub fn sweep_empirical(
    figure: FigureId,
    base: &SimConfig,
    m_values: &[u64],
) -> Result<Vec<CurvePoint>, AnalysisError> {
    if m_values.is_empty() {
        return Err(AnalysisError::InvalidParam("empty sweep grid".into()));
    }
    let final_round = match figure {
        FigureId::Fig3 => false,
        FigureId::Fig4 => true,
        _ => {
            return Err(AnalysisError::InvalidParam(
                "empirical sweeps cover fig3 and fig4".into(),
            ))
        }
    };
    base.validate().map_err(AnalysisError::from)?;

    let jobs: Vec<(u64, u64)> = m_values
        .iter()
        .flat_map(|&m| (0..base.trials as u64).map(move |t| (m, t)))
        .collect();
    let counts: Vec<(u64, u64, u64)> = jobs
        .par_iter()
        .map(|&(m, trial)| {
            let cfg = SimConfig { m, ..base.clone() };
            let mut sim = Simulation::new(&cfg, trial).expect("validated above");
            let report = if final_round {
                *sim.run_all_rounds().last().expect("at least round zero")
            } else {
                sim.run_establishment_round()
            };
            (
                m,
                report.attempted,
                report.direct_ok + report.supplemental_ok,
            )
        })
        .collect();

    let mut pooled: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for (m, attempted, ok) in counts {
        let e = pooled.entry(m).or_default();
        e.0 += attempted;
        e.1 += ok;
    }

    let mut points = Vec::new();
    for &m in m_values {
        let (attempted, ok) = pooled[&m];
        if attempted == 0 {
            return Err(AnalysisError::NoLinks);
        }
        let params = ConnectivityParams {
            n: base.n,
            m,
            d: base.d,
        };
        let x = m as f64 / base.n as f64;
        let series = format!("d={}", base.d);
        points.push(CurvePoint {
            figure,
            series: series.clone(),
            x,
            y: analytic_p(params)?,
            kind: PointKind::Analytic,
        });
        points.push(CurvePoint {
            figure,
            series,
            x,
            y: ok as f64 / attempted as f64,
            kind: PointKind::Empirical,
        });
    }
    Ok(points)
}

/// Storage snapshot for one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleAudit {
    pub role: &'static str,
    pub nodes: u64,
    pub preloaded_min: usize,
    pub preloaded_max: usize,
    pub session_keys_total: u64,
}

/// Per-role preloaded-secret counts plus session-key totals. Preloaded
/// material is what a node carries before deployment — one master key for a
/// regular node, the one special key for an auxiliary — and must stay at
/// exactly 1 per node no matter how the network grows. Session keys
/// accumulate with establishment and are reported separately.
pub fn storage_audit(sim: &Simulation) -> [RoleAudit; 2] {
    let reg_pre: Vec<usize> = sim
        .regulars()
        .iter()
        .map(|r| r.preloaded_secret_count())
        .collect();
    let aux_pre: Vec<usize> = sim
        .auxiliaries()
        .iter()
        .map(|a| a.preloaded_secret_count())
        .collect();
    [
        RoleAudit {
            role: "regular",
            nodes: reg_pre.len() as u64,
            preloaded_min: reg_pre.iter().copied().min().unwrap_or(0),
            preloaded_max: reg_pre.iter().copied().max().unwrap_or(0),
            session_keys_total: sim
                .regulars()
                .iter()
                .map(|r| r.pairwise_keys().len() as u64)
                .sum(),
        },
        RoleAudit {
            role: "auxiliary",
            nodes: aux_pre.len() as u64,
            preloaded_min: aux_pre.iter().copied().min().unwrap_or(0),
            preloaded_max: aux_pre.iter().copied().max().unwrap_or(0),
            session_keys_total: sim
                .auxiliaries()
                .iter()
                .map(|a| a.session_keys().len() as u64)
                .sum(),
        },
    ]
}

/// Sum of per-node operation counters across all regular nodes.
pub fn regular_op_totals(sim: &Simulation) -> crate::protocol::OpCounts {
    let mut total = crate::protocol::OpCounts::default();
    for r in sim.regulars() {
        let c = r.op_counts();
        total.macs += c.macs;
        total.encryptions += c.encryptions;
        total.decryptions += c.decryptions;
        total.prf_calls += c.prf_calls;
    }
    total
}
