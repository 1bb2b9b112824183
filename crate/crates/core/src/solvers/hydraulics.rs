//! Extended-period hydraulics with pressure-dependent demand.
//!
//! Each snapshot solves for junction heads `h` such that every junction
//! balances:
//!
//! ```text
//! F_i(h) = Σ_in q_k - Σ_out q_k - d_i(p_i) - leak_i(p_i) = 0,   p_i = h_i - z_i
//! ```
//!
//! with Hazen-Williams pipes `q = sgn(Δh) (|Δh| / r)^(1/1.852)`, pumps
//! following `gain = h0 (1 - (q / qmax)^2)` behind a check valve, the
//! pressure-dependent demand `d_i` of [`pda_demand`] and orifice leaks
//! `Cd A sqrt(2 g p)`. Every one of these relations is monotone, so `-F` is
//! the gradient of a convex energy
//!
//! ```text
//! E(h) = Σ_links Φ_k(h_from - h_to) + Σ_junctions Ψ_i(h_i),  Φ' = q,  Ψ' = d + leak
//! ```
//!
//! and Newton's method with an Armijo backtracking line search on `E`
//! converges from any start. Derivatives that blow up (zero flow, the
//! pressure threshold, pump shut-off) are capped in the Jacobian only; the
//! residual always uses the exact relations.
//!
//! Tanks and reservoirs are fixed-head boundaries during a snapshot. Tank
//! levels move by explicit Euler between snapshots. A tank at its minimum
//! level that would drain, or at its maximum level that would fill, is
//! closed and re-solved as a zero-demand junction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ComponentKind, IntegratedNetwork, Status, Statuses};

const HW_EXPONENT: f64 = 1.852;
const GRAVITY: f64 = 9.81;
/// Cap on any single Jacobian entry contribution.
const MAX_DERIVATIVE: f64 = 1e8;
const MIN_DIAGONAL: f64 = 1e-10;
/// Sufficient-decrease constant of the line search. Head-form laws behave
/// like `u^0.54` near zero flow, where a full Newton step overshoots to
/// about -0.85 of the error; a strict constant halves such steps.
const ARMIJO: f64 = 0.25;
/// Below this argument, square-root laws (PDA, leaks, pump curves) are
/// replaced by their secant so the Jacobian stays bounded.
const ROOT_REGULARIZATION: f64 = 1e-5;
/// Relative energy change treated as rounding noise in the line search.
const ENERGY_ROUNDING: f64 = 1e-12;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `c·x^a` for `0 < a < 1`, linear below `x_r`: value, derivative and
/// integral from zero.
fn root_law(c: f64, a: f64, x: f64, x_r: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let slope = c * x_r.powf(a - 1.0);
    if x < x_r {
        (slope * x, slope, 0.5 * slope * x * x)
    } else {
        (
            c * x.powf(a),
            a * c * x.powf(a - 1.0),
            0.5 * slope * x_r * x_r + c * (x.powf(a + 1.0) - x_r.powf(a + 1.0)) / (a + 1.0),
        )
    }
}

/// Parameters of the pressure-demand relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdaParams {
    /// Pressure (m) at or below which nothing is delivered.
    pub p0: f64,
    /// Pressure (m) at which the full demand is delivered.
    pub pf: f64,
    /// Exponent of the relation.
    pub e: f64,
}

impl Default for PdaParams {
    fn default() -> Self {
        PdaParams { p0: 0.0, pf: 20.0, e: 2.0 }
    }
}

impl PdaParams {
    pub fn new(p0: f64, pf: f64, e: f64) -> Result<Self> {
        if !(pf > p0 && p0 >= 0.0 && e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pressure-demand parameters need pf > p0 >= 0 and e > 0 (got p0={p0}, pf={pf}, e={e})"
            )));
        }
        Ok(PdaParams { p0, pf, e })
    }

    /// Delivered demand, its derivative and `∫_{p0}^{pressure} d(p) dp`,
    /// with the root law linearised just above `p0`.
    fn relation(&self, pressure: f64, desired: f64) -> (f64, f64, f64) {
        if pressure <= self.p0 {
            return (0.0, 0.0, 0.0);
        }
        let span = self.pf - self.p0;
        let law = |x: f64| root_law(desired / span.powf(1.0 / self.e), 1.0 / self.e, x, ROOT_REGULARIZATION * span);
        if pressure <= self.pf {
            law(pressure - self.p0)
        } else {
            (desired, 0.0, law(span).2 + desired * (pressure - self.pf))
        }
    }
}

/// Delivered demand at `pressure` (m) for a `desired` demand (m³/s).
///
/// Zero at or below `p0`, `desired * ((p - p0) / (pf - p0))^(1/e)` up to
/// `pf`, and `desired` above it.
///
/// ```
/// use lifeline::solvers::{pda_demand, PdaParams};
/// let params = PdaParams::default(); // p0 = 0 m, pf = 20 m, e = 2
/// assert_eq!(pda_demand(5.0, 10.0, &params), 5.0);
/// assert_eq!(pda_demand(25.0, 10.0, &params), 10.0);
/// ```
pub fn pda_demand(pressure: f64, desired: f64, params: &PdaParams) -> f64 {
    if pressure <= params.p0 {
        0.0
    } else if pressure <= params.pf {
        desired * ((pressure - params.p0) / (params.pf - params.p0)).powf(1.0 / params.e)
    } else {
        desired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydraulicOptions {
    /// Junction mass-balance tolerance, m³/s.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Flow below which pipe headloss is linearised, m³/s.
    pub flow_regularization: f64,
    pub leak_discharge_coefficient: f64,
    pub pda: PdaParams,
}

impl Default for HydraulicOptions {
    fn default() -> Self {
        HydraulicOptions {
            tolerance: 1e-6,
            max_iterations: 100,
            flow_regularization: 1e-8,
            leak_discharge_coefficient: 0.75,
            pda: PdaParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NodeKind {
    Junction { elevation: f64, base_demand: f64 },
    Tank { elevation: f64, area: f64, min_level: f64, max_level: f64, init_level: f64 },
    Reservoir { head: f64, volume: Option<f64> },
}

impl NodeKind {
    fn elevation(&self) -> f64 {
        match *self {
            NodeKind::Junction { elevation, .. } | NodeKind::Tank { elevation, .. } => elevation,
            NodeKind::Reservoir { head, .. } => head,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LinkKind {
    /// Hazen-Williams resistance `r` in `Δh = r q^1.852`, and diameter.
    Pipe { resistance: f64, diameter: f64 },
    Pump { shutoff_head: f64, max_flow: f64 },
}

#[derive(Debug, Clone)]
struct WLink {
    id: String,
    from: usize,
    to: usize,
    kind: LinkKind,
}

/// How a link takes part in a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Open,
    /// Open, with an orifice leak of half the pipe cross-section at its middle.
    Leaking,
    Closed,
}

/// Water network compiled to dense indices.
#[derive(Debug, Clone)]
pub struct WaterModel {
    node_ids: Vec<String>,
    nodes: Vec<NodeKind>,
    links: Vec<WLink>,
    pub options: HydraulicOptions,
}

/// Mutable extended-period state.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterRun {
    tank_level: Vec<f64>,
    reservoir_volume: Vec<Option<f64>>,
    heads: Vec<f64>,
    leak_heads: Vec<f64>,
    /// Last solve, reused while modes, tank levels and dry flags are unchanged.
    memo: Option<(Vec<LinkMode>, Vec<bool>, Snapshot)>,
}

/// One solved instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Per model node.
    pub head: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Delivered demand per node (zero for tanks and reservoirs).
    pub demand: Vec<f64>,
    /// Per link; for a leaking pipe the flow entering its upstream half.
    pub flow: Vec<f64>,
    pub leak: Vec<f64>,
    /// Net inflow per node for tanks (positive fills).
    pub tank_inflow: Vec<f64>,
    pub reservoir_outflow: Vec<f64>,
    pub tank_level: Vec<f64>,
    pub dry_reservoirs: Vec<usize>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
enum SysNode {
    Fixed(f64),
    Free { elevation: f64, desired: f64, leak_coef: f64 },
}

#[derive(Debug, Clone, Copy)]
struct SysLink {
    a: usize,
    b: usize,
    kind: LinkKind,
}

struct System {
    nodes: Vec<SysNode>,
    links: Vec<SysLink>,
    /// sys node -> unknown index
    unknown: Vec<Option<usize>>,
    free: Vec<usize>,
}

fn hw_resistance(length: f64, diameter: f64, roughness: f64) -> f64 {
    10.667 * length / (roughness.powf(HW_EXPONENT) * diameter.powf(4.871))
}

impl WaterModel {
    pub fn new(net: &IntegratedNetwork, options: HydraulicOptions) -> Self {
        let mut node_ids = Vec::new();
        let mut nodes = Vec::new();
        for c in &net.water {
            let kind = match &c.kind {
                ComponentKind::DemandNode(n) => NodeKind::Junction {
                    elevation: n.elevation,
                    base_demand: n.base_demand,
                },
                ComponentKind::Tank(t) => NodeKind::Tank {
                    elevation: t.elevation,
                    area: t.area,
                    min_level: t.min_level,
                    max_level: t.max_level,
                    init_level: t.init_level,
                },
                ComponentKind::Reservoir(r) => NodeKind::Reservoir { head: r.head, volume: r.volume },
                _ => continue,
            };
            node_ids.push(c.id.clone());
            nodes.push(kind);
        }
        let idx = |id: &str| node_ids.iter().position(|n| n == id).expect("validated water node");
        let mut links = Vec::new();
        for c in &net.water {
            let (from, to, kind) = match &c.kind {
                ComponentKind::Pipe(p) => (
                    &p.from,
                    &p.to,
                    LinkKind::Pipe {
                        resistance: hw_resistance(p.length, p.diameter, p.roughness),
                        diameter: p.diameter,
                    },
                ),
                ComponentKind::Pump(p) => (
                    &p.from,
                    &p.to,
                    LinkKind::Pump { shutoff_head: p.shutoff_head, max_flow: p.max_flow },
                ),
                _ => continue,
            };
            links.push(WLink { id: c.id.clone(), from: idx(from), to: idx(to), kind });
        }
        WaterModel { node_ids, nodes, links, options }
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn link_ids(&self) -> Vec<String> {
        self.links.iter().map(|l| l.id.clone()).collect()
    }

    /// Demand nodes, in model order.
    pub fn consumer_indices(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], NodeKind::Junction { .. }))
            .collect()
    }

    pub fn desired_demand(&self, node: usize) -> f64 {
        match self.nodes[node] {
            NodeKind::Junction { base_demand, .. } => base_demand,
            _ => 0.0,
        }
    }

    /// Link modes implied by component statuses alone.
    pub fn link_modes(&self, statuses: &Statuses) -> Vec<LinkMode> {
        self.links
            .iter()
            .map(|l| match (l.kind, statuses.get(&l.id)) {
                (LinkKind::Pipe { .. }, Status::Failed) => LinkMode::Leaking,
                (_, s) if s.in_service() => LinkMode::Open,
                _ => LinkMode::Closed,
            })
            .collect()
    }

    /// Overrides the mode of a link by id (for dependency effects).
    pub fn close_link(&self, modes: &mut [LinkMode], id: &str) {
        if let Some(i) = self.links.iter().position(|l| l.id == id) {
            modes[i] = LinkMode::Closed;
        }
    }

    pub fn start(&self) -> WaterRun {
        let fixed_max = self
            .nodes
            .iter()
            .filter_map(|n| match *n {
                NodeKind::Tank { elevation, init_level, .. } => Some(elevation + init_level),
                NodeKind::Reservoir { head, .. } => Some(head),
                _ => None,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        WaterRun {
            tank_level: self
                .nodes
                .iter()
                .map(|n| match *n {
                    NodeKind::Tank { init_level, .. } => init_level,
                    _ => f64::NAN,
                })
                .collect(),
            reservoir_volume: self
                .nodes
                .iter()
                .map(|n| match *n {
                    NodeKind::Reservoir { volume, .. } => volume,
                    _ => None,
                })
                .collect(),
            heads: self
                .nodes
                .iter()
                .map(|n| if fixed_max.is_finite() { fixed_max.max(n.elevation()) } else { n.elevation() })
                .collect(),
            leak_heads: vec![f64::NAN; self.links.len()],
            memo: None,
        }
    }

    fn reservoir_dry(&self, run: &WaterRun, i: usize) -> bool {
        matches!(run.reservoir_volume[i], Some(v) if v <= 0.0)
    }

    fn build_system(&self, run: &WaterRun, modes: &[LinkMode], closed_tanks: &[bool]) -> System {
        let opts = &self.options;
        let mut nodes: Vec<SysNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match *n {
                NodeKind::Junction { elevation, base_demand } => SysNode::Free {
                    elevation,
                    desired: base_demand,
                    leak_coef: 0.0,
                },
                NodeKind::Tank { elevation, .. } if closed_tanks[i] => SysNode::Free {
                    elevation: elevation + run.tank_level[i],
                    desired: 0.0,
                    leak_coef: 0.0,
                },
                NodeKind::Tank { elevation, .. } => SysNode::Fixed(elevation + run.tank_level[i]),
                NodeKind::Reservoir { head, .. } if self.reservoir_dry(run, i) => SysNode::Free {
                    elevation: head,
                    desired: 0.0,
                    leak_coef: 0.0,
                },
                NodeKind::Reservoir { head, .. } => SysNode::Fixed(head),
            })
            .collect();
        let mut links = Vec::new();
        for (k, l) in self.links.iter().enumerate() {
            match (modes[k], l.kind) {
                (LinkMode::Closed, _) => {}
                (LinkMode::Leaking, LinkKind::Pipe { resistance, diameter }) => {
                    let leak = nodes.len();
                    let area = 0.5 * std::f64::consts::PI * diameter * diameter / 4.0;
                    nodes.push(SysNode::Free {
                        elevation: 0.5 * (self.nodes[l.from].elevation() + self.nodes[l.to].elevation()),
                        desired: 0.0,
                        leak_coef: opts.leak_discharge_coefficient * area * (2.0 * GRAVITY).sqrt(),
                    });
                    let half = LinkKind::Pipe { resistance: 0.5 * resistance, diameter };
                    links.push(SysLink { a: l.from, b: leak, kind: half });
                    links.push(SysLink { a: leak, b: l.to, kind: half });
                }
                (_, kind) => links.push(SysLink { a: l.from, b: l.to, kind }),
            }
        }

        // free nodes with no path to a fixed head are left out of the solve
        let mut adj = vec![Vec::new(); nodes.len()];
        for l in &links {
            adj[l.a].push(l.b);
            adj[l.b].push(l.a);
        }
        let mut reached = vec![false; nodes.len()];
        let mut stack: Vec<usize> = (0..nodes.len())
            .filter(|&i| matches!(nodes[i], SysNode::Fixed(_)))
            .collect();
        for &s in &stack {
            reached[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !reached[v] {
                    reached[v] = true;
                    stack.push(v);
                }
            }
        }
        let mut unknown = vec![None; nodes.len()];
        let mut free = Vec::new();
        for i in 0..nodes.len() {
            if matches!(nodes[i], SysNode::Free { .. }) && reached[i] {
                unknown[i] = Some(free.len());
                free.push(i);
            }
        }
        System { nodes, links, unknown, free }
    }

    /// Flow, its derivative and the content `Φ` of a link at head drop `u`.
    fn link_relation(&self, kind: LinkKind, u: f64) -> (f64, f64, f64) {
        match kind {
            LinkKind::Pipe { resistance, .. } => {
                let m = 1.0 / HW_EXPONENT;
                let q_eps = self.options.flow_regularization;
                let u_eps = resistance * q_eps.powf(HW_EXPONENT);
                let a = u.abs();
                if a <= u_eps {
                    let slope = q_eps / u_eps;
                    (slope * u, slope.min(MAX_DERIVATIVE), 0.5 * slope * u * u)
                } else {
                    let q = (a / resistance).powf(m);
                    let phi = 0.5 * q_eps * u_eps
                        + (a.powf(m + 1.0) - u_eps.powf(m + 1.0)) / ((m + 1.0) * resistance.powf(m));
                    (q.copysign(u), (m * q / a).min(MAX_DERIVATIVE), phi)
                }
            }
            LinkKind::Pump { shutoff_head, max_flow } => {
                let (q, dq, content) = root_law(max_flow, 0.5, 1.0 + u / shutoff_head, ROOT_REGULARIZATION);
                (q, dq / shutoff_head, shutoff_head * content)
            }
        }
    }

    /// Outflow at a free node: (delivered demand, leak, derivative, content).
    fn node_relation(&self, elevation: f64, desired: f64, leak_coef: f64, head: f64) -> (f64, f64, f64, f64) {
        let p = head - elevation;
        let (d, mut deriv, mut content) = self.options.pda.relation(p, desired);
        let mut leak = 0.0;
        if leak_coef > 0.0 {
            let (q, dq, c) = root_law(leak_coef, 0.5, p, ROOT_REGULARIZATION);
            leak = q;
            deriv += dq;
            content += c;
        }
        (d, leak, deriv, content)
    }

    fn head_of(sys: &System, x: &[f64], i: usize) -> f64 {
        match (sys.nodes[i], sys.unknown[i]) {
            (SysNode::Fixed(h), _) => h,
            (_, Some(k)) => x[k],
            (SysNode::Free { elevation, .. }, None) => elevation,
        }
    }

    /// Energy, residual and (optionally) Hessian at unknown heads `x`.
    fn evaluate(&self, sys: &System, x: &[f64], hessian: Option<&mut DMatrix<f64>>) -> (f64, Vec<f64>) {
        let n = sys.free.len();
        let mut energy = 0.0;
        let mut residual = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut off: Vec<(usize, usize, f64)> = Vec::new();
        for l in &sys.links {
            let (ka, kb) = (sys.unknown[l.a], sys.unknown[l.b]);
            if ka.is_none() && kb.is_none() && !matches!(sys.nodes[l.a], SysNode::Fixed(_)) {
                continue;
            }
            let u = Self::head_of(sys, x, l.a) - Self::head_of(sys, x, l.b);
            let (q, dq, phi) = self.link_relation(l.kind, u);
            energy += phi;
            if let Some(a) = ka {
                residual[a] -= q;
                diag[a] += dq;
            }
            if let Some(b) = kb {
                residual[b] += q;
                diag[b] += dq;
            }
            if let (Some(a), Some(b)) = (ka, kb) {
                off.push((a, b, dq));
            }
        }
        for (k, &i) in sys.free.iter().enumerate() {
            if let SysNode::Free { elevation, desired, leak_coef } = sys.nodes[i] {
                let (d, leak, deriv, content) = self.node_relation(elevation, desired, leak_coef, x[k]);
                energy += content;
                residual[k] -= d + leak;
                diag[k] += deriv;
            }
        }
        if let Some(h) = hessian {
            h.fill(0.0);
            for k in 0..n {
                h[(k, k)] = diag[k] + MIN_DIAGONAL;
            }
            for (a, b, dq) in off {
                h[(a, b)] -= dq;
                h[(b, a)] -= dq;
            }
        }
        (energy, residual)
    }

    fn newton(&self, sys: &System, x: &mut [f64]) -> Result<(f64, usize)> {
        let n = sys.free.len();
        if n == 0 {
            return Ok((0.0, 0));
        }
        let mut h = DMatrix::zeros(n, n);
        let mut worst = (f64::INFINITY, 0usize);
        for it in 0..=self.options.max_iterations {
            let (energy, residual) = self.evaluate(sys, x, Some(&mut h));
            let (arg, res) = residual
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, r)| if r.abs() > acc.1 { (i, r.abs()) } else { acc });
            worst = (res, arg);
            if res < self.options.tolerance {
                return Ok((res, it));
            }
            if it == self.options.max_iterations {
                break;
            }
            let rhs = DVector::from_vec(residual.clone());
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => h.clone().lu().solve(&rhs).ok_or_else(|| Error::HydraulicConvergence {
                    iterations: it,
                    residual: res,
                    node: self.sys_node_name(sys, sys.free[arg]),
                })?,
            };
            let slope: f64 = residual.iter().zip(step.iter()).map(|(r, s)| r * s).sum();
            let mut alpha = 1.0;
            let mut trial = x.to_vec();
            loop {
                for k in 0..n {
                    trial[k] = x[k] + alpha * step[k];
                }
                let (e_trial, r_trial) = self.evaluate(sys, &trial, None);
                // near the solution the energy change drops below rounding;
                // there the residual norm decides
                let flat = (e_trial - energy).abs() <= ENERGY_ROUNDING * (1.0 + energy.abs());
                let smaller = norm2(&r_trial) < norm2(&residual);
                if e_trial <= energy - ARMIJO * alpha * slope || (flat && smaller) || alpha < 1e-10 {
                    break;
                }
                alpha *= 0.5;
            }
            x.copy_from_slice(&trial);
        }
        Err(Error::HydraulicConvergence {
            iterations: self.options.max_iterations,
            residual: worst.0,
            node: self.sys_node_name(sys, sys.free[worst.1]),
        })
    }

    fn sys_node_name(&self, sys: &System, i: usize) -> String {
        if i < self.node_ids.len() {
            self.node_ids[i].clone()
        } else {
            // leak node: find the link it splits
            let half = sys.links.iter().position(|l| l.b == i).unwrap_or(0);
            format!("leak on link #{half}")
        }
    }

    fn solve_system(&self, run: &mut WaterRun, modes: &[LinkMode], closed_tanks: &[bool]) -> Result<(System, Vec<f64>, f64, usize)> {
        let sys = self.build_system(run, modes, closed_tanks);
        // warm start from the previous solution
        let mut leak_of = vec![usize::MAX; sys.nodes.len()];
        let mut next_leak = self.nodes.len();
        for (k, m) in modes.iter().enumerate() {
            if *m == LinkMode::Leaking {
                leak_of[next_leak] = k;
                next_leak += 1;
            }
        }
        let mut x: Vec<f64> = sys
            .free
            .iter()
            .map(|&i| {
                if i < self.nodes.len() {
                    run.heads[i]
                } else {
                    let k = leak_of[i];
                    let warm = run.leak_heads[k];
                    if warm.is_finite() {
                        warm
                    } else {
                        0.5 * (run.heads[self.links[k].from] + run.heads[self.links[k].to])
                    }
                }
            })
            .collect();
        let (res, its) = self.newton(&sys, &mut x)?;
        Ok((sys, x, res, its))
    }

    /// Solves the instant described by `run` under `modes`.
    pub fn snapshot(&self, run: &mut WaterRun, modes: &[LinkMode]) -> Result<Snapshot> {
        let dry: Vec<bool> = (0..self.nodes.len()).map(|i| self.reservoir_dry(run, i)).collect();
        if let Some((m, d, snap)) = &run.memo {
            let same_levels = snap
                .tank_level
                .iter()
                .zip(&run.tank_level)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if m == modes && *d == dry && same_levels {
                return Ok(snap.clone());
            }
        }
        let snap = self.solve_snapshot(run, modes)?;
        run.memo = Some((modes.to_vec(), dry, snap.clone()));
        Ok(snap)
    }

    fn solve_snapshot(&self, run: &mut WaterRun, modes: &[LinkMode]) -> Result<Snapshot> {
        let n_nodes = self.nodes.len();
        let mut closed = vec![false; n_nodes];
        let mut solved = self.solve_system(run, modes, &closed)?;
        let mut flows = self.link_flows(&solved.0, &solved.1);
        let mut changed = false;
        for i in 0..n_nodes {
            if let NodeKind::Tank { min_level, max_level, .. } = self.nodes[i] {
                let inflow = self.node_inflow(&solved.0, &flows, i);
                let level = run.tank_level[i];
                if (level <= min_level + 1e-9 && inflow < 0.0) || (level >= max_level - 1e-9 && inflow > 0.0) {
                    closed[i] = true;
                    changed = true;
                }
            }
        }
        if changed {
            solved = self.solve_system(run, modes, &closed)?;
            flows = self.link_flows(&solved.0, &solved.1);
        }
        let (sys, x, residual, iterations) = solved;

        let mut snap = Snapshot {
            head: vec![0.0; n_nodes],
            pressure: vec![0.0; n_nodes],
            demand: vec![0.0; n_nodes],
            flow: vec![0.0; self.links.len()],
            leak: vec![0.0; self.links.len()],
            tank_inflow: vec![0.0; n_nodes],
            reservoir_outflow: vec![0.0; n_nodes],
            tank_level: run.tank_level.clone(),
            dry_reservoirs: (0..n_nodes).filter(|&i| self.reservoir_dry(run, i)).collect(),
            residual,
            iterations,
        };
        for i in 0..n_nodes {
            let h = Self::head_of(&sys, &x, i);
            snap.head[i] = h;
            let elevation = self.nodes[i].elevation();
            match sys.nodes[i] {
                SysNode::Free { desired, .. } if sys.unknown[i].is_some() => {
                    snap.pressure[i] = h - elevation;
                    snap.demand[i] = pda_demand(h - elevation, desired, &self.options.pda);
                }
                SysNode::Free { .. } => {
                    // cut off from every source: empty
                    snap.pressure[i] = 0.0;
                }
                SysNode::Fixed(_) => snap.pressure[i] = h - elevation,
            }
            match self.nodes[i] {
                NodeKind::Tank { .. } if !closed[i] => snap.tank_inflow[i] = self.node_inflow(&sys, &flows, i),
                NodeKind::Reservoir { .. } if !self.reservoir_dry(run, i) => {
                    snap.reservoir_outflow[i] = -self.node_inflow(&sys, &flows, i)
                }
                _ => {}
            }
        }
        // map system links back to model links
        let mut s = 0;
        for (k, m) in modes.iter().enumerate() {
            match m {
                LinkMode::Closed => {}
                LinkMode::Open => {
                    snap.flow[k] = flows[s];
                    s += 1;
                }
                LinkMode::Leaking => {
                    snap.flow[k] = flows[s];
                    snap.leak[k] = flows[s] - flows[s + 1];
                    s += 2;
                }
            }
        }

        // keep the solution for the next warm start
        for i in 0..n_nodes {
            run.heads[i] = snap.head[i];
        }
        let mut leak_node = n_nodes;
        for (k, m) in modes.iter().enumerate() {
            if *m == LinkMode::Leaking {
                run.leak_heads[k] = Self::head_of(&sys, &x, leak_node);
                leak_node += 1;
            }
        }
        Ok(snap)
    }

    fn link_flows(&self, sys: &System, x: &[f64]) -> Vec<f64> {
        sys.links
            .iter()
            .map(|l| {
                let u = Self::head_of(sys, x, l.a) - Self::head_of(sys, x, l.b);
                self.link_relation(l.kind, u).0
            })
            .collect()
    }

    fn node_inflow(&self, sys: &System, flows: &[f64], i: usize) -> f64 {
        sys.links
            .iter()
            .zip(flows)
            .map(|(l, q)| if l.b == i { *q } else if l.a == i { -*q } else { 0.0 })
            .sum()
    }

    /// Moves tank levels and reservoir volumes forward by `dt` seconds.
    pub fn integrate(&self, run: &mut WaterRun, snap: &Snapshot, dt: f64) {
        for i in 0..self.nodes.len() {
            match self.nodes[i] {
                NodeKind::Tank { area, min_level, max_level, .. } => {
                    let level = run.tank_level[i] + snap.tank_inflow[i] * dt / area;
                    run.tank_level[i] = level.clamp(min_level, max_level);
                }
                NodeKind::Reservoir { .. } => {
                    if let Some(v) = run.reservoir_volume[i].as_mut() {
                        *v -= snap.reservoir_outflow[i] * dt;
                    }
                }
                _ => {}
            }
        }
    }

    /// Reservoirs whose volume is exhausted.
    pub fn dry_reservoirs(&self, run: &WaterRun) -> Vec<String> {
        (0..self.nodes.len())
            .filter(|&i| self.reservoir_dry(run, i))
            .map(|i| self.node_ids[i].clone())
            .collect()
    }

    /// Solves from `start` to `end` under fixed modes, calling `sample` at
    /// every multiple of `step` in `[start, end)`, plus `end` itself when
    /// `include_end` is set.
    pub fn advance(
        &self,
        run: &mut WaterRun,
        modes: &[LinkMode],
        start: f64,
        end: f64,
        step: f64,
        include_end: bool,
        mut sample: impl FnMut(f64, &Snapshot),
    ) -> Result<()> {
        let mut t = start;
        loop {
            let on_grid = (t / step).fract() == 0.0;
            let at_end = t >= end;
            if at_end && !include_end {
                break;
            }
            let snap = self.snapshot(run, modes)?;
            if on_grid {
                sample(t, &snap);
            }
            if at_end {
                break;
            }
            let next_grid = ((t / step).floor() + 1.0) * step;
            let next = next_grid.min(end);
            self.integrate(run, &snap, next - t);
            t = next;
        }
        Ok(())
    }
}

/// Named view of one hydraulic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicState {
    /// s
    pub time: f64,
    /// m, demand nodes and tanks
    pub node_pressure: BTreeMap<String, f64>,
    /// m³/s delivered, demand nodes
    pub node_actual_demand: BTreeMap<String, f64>,
    /// m³/s, pipes and pumps
    pub link_flow: BTreeMap<String, f64>,
    /// m³/s, leaking pipes
    pub leak_flow: BTreeMap<String, f64>,
    /// m
    pub tank_level: BTreeMap<String, f64>,
    pub dry_reservoirs: Vec<String>,
    /// Worst junction mass-balance residual, m³/s.
    pub residual: f64,
}

impl WaterModel {
    pub fn named(&self, time: f64, snap: &Snapshot) -> HydraulicState {
        let mut state = HydraulicState {
            time,
            node_pressure: BTreeMap::new(),
            node_actual_demand: BTreeMap::new(),
            link_flow: BTreeMap::new(),
            leak_flow: BTreeMap::new(),
            tank_level: BTreeMap::new(),
            dry_reservoirs: snap.dry_reservoirs.iter().map(|&i| self.node_ids[i].clone()).collect(),
            residual: snap.residual,
        };
        for (i, id) in self.node_ids.iter().enumerate() {
            match self.nodes[i] {
                NodeKind::Junction { .. } => {
                    state.node_pressure.insert(id.clone(), snap.pressure[i]);
                    state.node_actual_demand.insert(id.clone(), snap.demand[i]);
                }
                NodeKind::Tank { .. } => {
                    state.node_pressure.insert(id.clone(), snap.pressure[i]);
                    state.tank_level.insert(id.clone(), snap.tank_level[i]);
                }
                NodeKind::Reservoir { .. } => {}
            }
        }
        for (k, l) in self.links.iter().enumerate() {
            state.link_flow.insert(l.id.clone(), snap.flow[k]);
            if snap.leak[k] != 0.0 {
                state.leak_flow.insert(l.id.clone(), snap.leak[k]);
            }
        }
        state
    }
}

/// Extended-period simulation under fixed statuses, sampled every `step`
/// seconds from 0 to `duration` inclusive.
pub fn solve_hydraulics(
    net: &IntegratedNetwork,
    statuses: &Statuses,
    duration: f64,
    step: f64,
    params: &PdaParams,
) -> Result<Vec<HydraulicState>> {
    if net.water.is_empty() {
        return Err(Error::InvalidInput("water network is empty".into()));
    }
    if !(step > 0.0 && duration >= 0.0 && (duration / step).fract() == 0.0) {
        return Err(Error::InvalidInput(format!("step {step} s must divide duration {duration} s")));
    }
    let model = WaterModel::new(net, HydraulicOptions { pda: *params, ..HydraulicOptions::default() });
    let modes = model.link_modes(statuses);
    let mut run = model.start();
    let mut out = Vec::new();
    model.advance(&mut run, &modes, 0.0, duration, step, true, |t, snap| out.push(model.named(t, snap)))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::*;

    #[test]
    fn pda_closed_form_points() {
        let p = PdaParams::new(0.0, 20.0, 2.0).unwrap();
        assert_eq!(pda_demand(0.0, 10.0, &p), 0.0);
        assert_eq!(pda_demand(20.0, 10.0, &p), 10.0);
        assert_eq!(pda_demand(5.0, 10.0, &p), 5.0);
        assert_eq!(pda_demand(-3.0, 10.0, &p), 0.0);
        assert_eq!(pda_demand(300.0, 10.0, &p), 10.0);
    }

    #[test]
    fn pda_params_are_checked() {
        assert!(PdaParams::new(5.0, 5.0, 2.0).is_err());
        assert!(PdaParams::new(-1.0, 5.0, 2.0).is_err());
        assert!(PdaParams::new(0.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn pda_integral_matches_quadrature() {
        let p = PdaParams::default();
        for &pressure in &[3.0, 12.5, 20.0, 31.0] {
            let n = 200_000;
            let h = pressure / n as f64;
            let simpson: f64 = (0..n)
                .map(|k| {
                    let a = k as f64 * h;
                    h / 6.0 * (pda_demand(a, 2.0, &p) + 4.0 * pda_demand(a + h / 2.0, 2.0, &p) + pda_demand(a + h, 2.0, &p))
                })
                .sum();
            assert!((simpson - p.relation(pressure, 2.0).2).abs() < 1e-6, "{pressure}");
        }
    }

    pub(crate) fn node(id: &str, x: f64, demand: f64) -> Component {
        Component::new(
            id,
            Point::new(x, 0.0),
            ComponentKind::DemandNode(DemandNode { elevation: 0.0, base_demand: demand }),
        )
    }

    pub(crate) fn pipe(id: &str, a: &str, b: &str, length: f64, diameter: f64) -> Component {
        Component::new(
            id,
            Point::default(),
            ComponentKind::Pipe(Pipe { from: a.into(), to: b.into(), length, diameter, roughness: 100.0 }),
        )
    }

    pub(crate) fn water_only(water: Vec<Component>) -> IntegratedNetwork {
        IntegratedNetwork {
            schema_version: 1,
            water,
            power: vec![],
            traffic: vec![],
            dependencies: vec![],
            od_matrix: vec![],
            zone_priority: Default::default(),
        }
    }

    fn reservoir(id: &str, head: f64) -> Component {
        Component::new(id, Point::default(), ComponentKind::Reservoir(Reservoir { head, volume: None }))
    }

    #[test]
    fn single_pipe_unconstrained() {
        let net = water_only(vec![
            reservoir("w_r", 50.0),
            node("w_a", 100.0, 0.01),
            pipe("w_p", "w_r", "w_a", 100.0, 0.2),
        ]);
        let out = solve_hydraulics(&net, &Statuses::new(), 0.0, 60.0, &PdaParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].node_actual_demand["w_a"], 0.01);
        assert!((out[0].link_flow["w_p"] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn stopped_pump_without_gravity_head_delivers_nothing() {
        let pump = Component::new(
            "w_pump",
            Point::default(),
            ComponentKind::Pump(Pump { from: "w_r".into(), to: "w_a".into(), shutoff_head: 40.0, max_flow: 0.1 }),
        );
        let net = water_only(vec![reservoir("w_r", 0.0), node("w_a", 100.0, 0.01), pump]);
        let running = solve_hydraulics(&net, &Statuses::new(), 0.0, 60.0, &PdaParams::default()).unwrap();
        assert_eq!(running[0].node_actual_demand["w_a"], 0.01);
        let mut st = Statuses::new();
        st.set("w_pump", Status::Failed);
        let stopped = solve_hydraulics(&net, &st, 0.0, 60.0, &PdaParams::default()).unwrap();
        assert_eq!(stopped[0].node_actual_demand["w_a"], 0.0);
        assert_eq!(stopped[0].link_flow["w_pump"], 0.0);
    }

    #[test]
    fn low_pressure_obeys_pda() {
        // reservoir only 10 m above the node: partial delivery
        let net = water_only(vec![
            reservoir("w_r", 10.0),
            node("w_a", 100.0, 0.05),
            pipe("w_p", "w_r", "w_a", 2000.0, 0.15),
        ]);
        let s = &solve_hydraulics(&net, &Statuses::new(), 0.0, 60.0, &PdaParams::default()).unwrap()[0];
        let p = s.node_pressure["w_a"];
        let d = s.node_actual_demand["w_a"];
        assert!(p > 0.0 && p < 10.0, "{p}");
        assert!((d - pda_demand(p, 0.05, &PdaParams::default())).abs() < 1e-12);
        assert!(d < 0.05);
        assert!((s.link_flow["w_p"] - d).abs() < 1e-6);
    }

    #[test]
    fn step_must_divide_duration() {
        let net = water_only(vec![reservoir("w_r", 10.0), node("w_a", 1.0, 0.0), pipe("w_p", "w_r", "w_a", 10.0, 0.1)]);
        assert!(solve_hydraulics(&net, &Statuses::new(), 100.0, 60.0, &PdaParams::default()).is_err());
    }

    #[test]
    fn testbed_baseline_is_full_service() {
        let net = build_simple_testbed();
        let out = solve_hydraulics(&net, &Statuses::new(), 3600.0, 60.0, &PdaParams::default()).unwrap();
        assert_eq!(out.len(), 61);
        for s in &out {
            assert!(s.residual < 1e-6);
            for (id, d) in &s.node_actual_demand {
                assert!((d - 0.008).abs() < 1e-12, "{id} {d} at {}", s.time);
            }
        }
    }

    #[test]
    fn leak_drains_pressure() {
        let net = build_simple_testbed();
        let mut st = Statuses::new();
        st.set("w_pipe_05", Status::Failed);
        let out = solve_hydraulics(&net, &st, 600.0, 60.0, &PdaParams::default()).unwrap();
        let s = &out[0];
        assert!(s.leak_flow["w_pipe_05"] > 0.0);
        let delivered: f64 = s.node_actual_demand.values().sum();
        assert!(delivered < 0.072);
    }

    #[test]
    fn tank_drains_then_closes_without_pump() {
        let net = build_simple_testbed();
        let mut st = Statuses::new();
        st.set("w_pump_1", Status::Failed);
        let out = solve_hydraulics(&net, &st, 3600.0, 60.0, &PdaParams::default()).unwrap();
        let first: f64 = out[0].node_actual_demand.values().sum();
        let last: f64 = out.last().unwrap().node_actual_demand.values().sum();
        assert!((first - 0.072).abs() < 1e-9);
        assert!(last < 1e-9, "{last}");
        assert_eq!(out.last().unwrap().tank_level["w_tank_1"], 0.5);
    }

    #[test]
    fn finite_reservoir_runs_dry() {
        let res = Component::new(
            "w_r",
            Point::default(),
            ComponentKind::Reservoir(Reservoir { head: 50.0, volume: Some(1.0) }),
        );
        let net = water_only(vec![res, node("w_a", 100.0, 0.01), pipe("w_p", "w_r", "w_a", 100.0, 0.2)]);
        let out = solve_hydraulics(&net, &Statuses::new(), 180.0, 60.0, &PdaParams::default()).unwrap();
        assert!(out[0].dry_reservoirs.is_empty());
        assert_eq!(out[2].dry_reservoirs, vec!["w_r".to_string()]);
        assert_eq!(out[2].node_actual_demand["w_a"], 0.0);
    }
}
