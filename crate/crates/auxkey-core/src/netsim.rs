//! Field geometry, node placement, range-derived adjacency, auxiliary
//! discovery, and the mobility step. Everything here is deterministic given
//! the seeded RNG streams; the establishment engine drives it per round.

use crate::crypto::NodeId;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Distance handling at the field edge. Toroidal wrapping removes edge
/// effects, so the measured mean degree matches the `d` the field area was
/// sized for; bounded mode keeps the hard edge for realism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Bounded,
    Toroidal,
}

/// How auxiliary positions are drawn.
///
/// `Cells` is the scheme's stated plan: split the field into c×c cells
/// (c = ⌈√m⌉) and drop one auxiliary uniformly inside each of the first m
/// cells, row-major from the origin corner. `Uniform` places them i.i.d.
/// like the regular nodes; the connectivity formulas model exactly this, so
/// the figure-reproduction experiments use it (see the analysis module docs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuxPlacement {
    #[default]
    Cells,
    Uniform,
}

/// Square field sized so n nodes at range ρ see d neighbors on average:
/// A = n·π·ρ²/(d+1), side = √A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGeometry {
    pub area: f64,
    pub side: f64,
    pub rho: f64,
    pub boundary: Boundary,
}

pub fn compute_field(n: u64, d: u64, rho: f64, boundary: Boundary) -> Result<FieldGeometry, NetsimError> {
    if n < 1 || d < 1 {
        return Err(NetsimError::InvalidParam(format!(
            "n and d must be at least 1 (n={n}, d={d})"
        )));
    }
    if rho.is_nan() || rho <= 0.0 {
        return Err(NetsimError::InvalidParam(format!("rho must be positive ({rho})")));
    }
    let area = n as f64 * std::f64::consts::PI * rho * rho / (d as f64 + 1.0);
    Ok(FieldGeometry {
        area,
        side: area.sqrt(),
        rho,
        boundary,
    })
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

impl FieldGeometry {
    /// Squared distance under the field's boundary metric.
    pub fn dist2(&self, a: Pos, b: Pos) -> f64 {
        let (mut dx, mut dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
        if self.boundary == Boundary::Toroidal {
            dx = dx.min(self.side - dx);
            dy = dy.min(self.side - dy);
        }
        dx * dx + dy * dy
    }

    /// Closed-ball adjacency: within range iff dist ≤ ρ.
    pub fn in_range(&self, a: Pos, b: Pos) -> bool {
        self.dist2(a, b) <= self.rho * self.rho
    }
}

/// n i.i.d. uniform positions in the field.
pub fn deploy_regular(n: u64, field: &FieldGeometry, rng: &mut impl Rng) -> Vec<Pos> {
    (0..n)
        .map(|_| Pos {
            x: rng.gen::<f64>() * field.side,
            y: rng.gen::<f64>() * field.side,
        })
        .collect()
}

/// Cell-stratified auxiliary placement: c×c equal cells, c = ⌈√m⌉, one aux
/// uniform inside each of the first m cells in row-major order from the
/// origin corner (rows advance along y).
pub fn deploy_auxiliary(m: u64, field: &FieldGeometry, rng: &mut impl Rng) -> Vec<Pos> {
    let c = (m as f64).sqrt().ceil() as u64;
    let cell = field.side / c as f64;
    (0..m)
        .map(|i| {
            let (row, col) = (i / c, i % c);
            Pos {
                x: (col as f64 + rng.gen::<f64>()) * cell,
                y: (row as f64 + rng.gen::<f64>()) * cell,
            }
        })
        .collect()
}

/// i.i.d. uniform auxiliary placement (see [`AuxPlacement::Uniform`]).
pub fn deploy_auxiliary_uniform(m: u64, field: &FieldGeometry, rng: &mut impl Rng) -> Vec<Pos> {
    deploy_regular(m, field, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Regular,
    Auxiliary,
}

/// Range-derived adjacency over the current positions, with a uniform-grid
/// spatial index (bucket size ≥ ρ) behind the exact distance check. The grid
/// is an optimization only; the brute-force O(N²) oracle in the tests defines
/// correctness.
#[derive(Debug, Clone)]
pub struct TopologyGraph {
    field: FieldGeometry,
    ids: Vec<NodeId>,
    roles: Vec<Role>,
    positions: Vec<Pos>,
    adj: Vec<Vec<u32>>, // sorted neighbor indices, no self-edges
    index_of: BTreeMap<NodeId, u32>,
}

impl TopologyGraph {
    pub fn build(
        field: FieldGeometry,
        nodes: impl IntoIterator<Item = (NodeId, Role, Pos)>,
    ) -> Self {
        let mut ids = Vec::new();
        let mut roles = Vec::new();
        let mut positions = Vec::new();
        for (id, role, pos) in nodes {
            ids.push(id);
            roles.push(role);
            positions.push(pos);
        }
        let count = ids.len();
        let index_of = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i as u32))
            .collect();

        // bucket nodes into a ⌊side/ρ⌋ × ⌊side/ρ⌋ grid: flooring keeps every
        // bucket at least ρ wide, so a 3×3 scan provably covers the ball
        let cells = (field.side / field.rho).floor().max(1.0) as i64;
        let cell_w = field.side / cells as f64;
        let cell_of = |p: Pos| {
            let cx = ((p.x / cell_w) as i64).clamp(0, cells - 1);
            let cy = ((p.y / cell_w) as i64).clamp(0, cells - 1);
            (cx, cy)
        };
        let mut buckets: BTreeMap<(i64, i64), Vec<u32>> = BTreeMap::new();
        for (i, p) in positions.iter().enumerate() {
            buckets.entry(cell_of(*p)).or_default().push(i as u32);
        }

        // scan the 3×3 cell neighborhood; with wrapping (or tiny grids) the
        // same cell can appear more than once, so dedupe the scan list
        let mut adj = vec![Vec::new(); count];
        for (i, p) in positions.iter().enumerate() {
            let (cx, cy) = cell_of(*p);
            let mut scan: Vec<(i64, i64)> = Vec::with_capacity(9);
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    let (mut nx, mut ny) = (cx + dx, cy + dy);
                    match field.boundary {
                        Boundary::Toroidal => {
                            nx = nx.rem_euclid(cells);
                            ny = ny.rem_euclid(cells);
                        }
                        Boundary::Bounded => {
                            if nx < 0 || ny < 0 || nx >= cells || ny >= cells {
                                continue;
                            }
                        }
                    }
                    if !scan.contains(&(nx, ny)) {
                        scan.push((nx, ny));
                    }
                }
            }
            let neighbors = &mut adj[i];
            for cell in scan {
                let Some(members) = buckets.get(&cell) else { continue };
                for &j in members {
                    if j as usize != i && field.in_range(*p, positions[j as usize]) {
                        neighbors.push(j);
                    }
                }
            }
            neighbors.sort_unstable();
        }

        TopologyGraph {
            field,
            ids,
            roles,
            positions,
            adj,
            index_of,
        }
    }

    pub fn field(&self) -> &FieldGeometry {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id_at(&self, index: u32) -> NodeId {
        self.ids[index as usize]
    }

    pub fn role_at(&self, index: u32) -> Role {
        self.roles[index as usize]
    }

    pub fn pos_at(&self, index: u32) -> Pos {
        self.positions[index as usize]
    }

    pub fn index_of(&self, id: NodeId) -> Result<u32, NetsimError> {
        self.index_of
            .get(&id)
            .copied()
            .ok_or(NetsimError::UnknownNode(id))
    }

    /// Neighbor indices of a node, sorted ascending.
    pub fn neighbor_indices(&self, index: u32) -> &[u32] {
        &self.adj[index as usize]
    }

    /// All nodes within range of `x`, as ids.
    pub fn neighbors(&self, x: NodeId) -> Result<Vec<NodeId>, NetsimError> {
        let i = self.index_of(x)?;
        Ok(self.adj[i as usize].iter().map(|&j| self.ids[j as usize]).collect())
    }
}

/// Pick an auxiliary for responder `v`: nearest in range (ties to the
/// smallest id). With `h = 1`, a miss falls back to auxiliaries in range of
/// v's regular neighbors — the neighbors collect auxiliary ids on v's behalf;
/// distance is still measured from v when ranking those candidates.
pub fn discover_aux(v: NodeId, topo: &TopologyGraph, h: u8) -> Result<Option<NodeId>, NetsimError> {
    Ok(discover_aux_route(v, topo, h)?.map(|(aux, _)| aux))
}

/// Like [`discover_aux`], but also names the relaying neighbor when the
/// auxiliary was found through one (None for a direct find). The relay is the
/// smallest-id regular neighbor of v that is adjacent to the chosen auxiliary.
pub fn discover_aux_route(
    v: NodeId,
    topo: &TopologyGraph,
    h: u8,
) -> Result<Option<(NodeId, Option<NodeId>)>, NetsimError> {
    let vi = topo.index_of(v)?;
    if let Some(aux) = nearest_aux(topo, vi, topo.neighbor_indices(vi)) {
        return Ok(Some((topo.id_at(aux), None)));
    }
    if h == 0 {
        return Ok(None);
    }

    // union of the regular neighbors' auxiliary neighborhoods
    let mut candidates: Vec<u32> = Vec::new();
    for &w in topo.neighbor_indices(vi) {
        if topo.role_at(w) != Role::Regular {
            continue;
        }
        for &a in topo.neighbor_indices(w) {
            if topo.role_at(a) == Role::Auxiliary && !candidates.contains(&a) {
                candidates.push(a);
            }
        }
    }
    let Some(aux) = nearest_aux(topo, vi, &candidates) else {
        return Ok(None);
    };
    let helper = topo
        .neighbor_indices(vi)
        .iter()
        .filter(|&&w| topo.role_at(w) == Role::Regular)
        .filter(|&&w| topo.neighbor_indices(w).binary_search(&aux).is_ok())
        .map(|&w| topo.id_at(w))
        .min()
        .expect("candidate auxiliary reachable through some neighbor");
    Ok(Some((topo.id_at(aux), Some(helper))))
}

fn nearest_aux(topo: &TopologyGraph, from: u32, candidates: &[u32]) -> Option<u32> {
    let p = topo.pos_at(from);
    candidates
        .iter()
        .copied()
        .filter(|&a| topo.role_at(a) == Role::Auxiliary)
        .min_by(|&a, &b| {
            let da = topo.field.dist2(p, topo.pos_at(a));
            let db = topo.field.dist2(p, topo.pos_at(b));
            da.partial_cmp(&db)
                .unwrap()
                .then(topo.id_at(a).cmp(&topo.id_at(b)))
        })
}

/// Mobility: per round a regular node lands uniformly in the disk of radius
/// `max_step` (twice the communication range by default) around its current
/// position. Auxiliaries stay put.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    pub max_step: f64,
    pub rounds: u32,
}

/// One mobility step. Toroidal fields wrap the landing point; bounded fields
/// resample the step until it lands inside.
pub fn move_regular(
    from: Pos,
    model: &MobilityModel,
    field: &FieldGeometry,
    rng: &mut impl Rng,
) -> Pos {
    loop {
        // uniform in the disk by rejection from the bounding square
        let (dx, dy) = loop {
            let dx = (rng.gen::<f64>() * 2.0 - 1.0) * model.max_step;
            let dy = (rng.gen::<f64>() * 2.0 - 1.0) * model.max_step;
            if dx * dx + dy * dy <= model.max_step * model.max_step {
                break (dx, dy);
            }
        };
        let (x, y) = (from.x + dx, from.y + dy);
        match field.boundary {
            Boundary::Toroidal => {
                return Pos {
                    x: x.rem_euclid(field.side),
                    y: y.rem_euclid(field.side),
                };
            }
            Boundary::Bounded => {
                if (0.0..=field.side).contains(&x) && (0.0..=field.side).contains(&y) {
                    return Pos { x, y };
                }
            }
        }
    }
}
