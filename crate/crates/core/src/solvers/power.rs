//! DC power dispatch with minimum load shedding.
//!
//! Per energised island the dispatch is a two-stage linear program over
//! source outputs `P_g`, shed amounts `s_l`, bus angles `θ` and branch flows
//! `f_k`:
//!
//! ```text
//! stage 1:  min Σ s_l
//! stage 2:  min Σ c_g P_g   s.t.  Σ s_l = stage-1 optimum
//!
//! s.t.  f_k = 100 · b_k · (θ_from - θ_to)        lines, transformers
//!       θ_from = θ_to                             closed switches
//!       Σ_g P_g + Σ_l s_l - Σ_out f + Σ_in f = Σ_l D_l   every bus
//!       0 <= P_g <= P_max,  0 <= s_l <= D_l,  |f_k| <= limit_k
//!       θ_ref = 0
//! ```
//!
//! Islands without an in-service source shed all of their load.

use std::collections::BTreeMap;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ComponentKind, IntegratedNetwork, Statuses};

const BASE_MVA: f64 = 100.0;

#[derive(Debug, Clone)]
struct BranchData {
    id: String,
    from: usize,
    to: usize,
    /// MW per radian; `None` for a switch.
    gain: Option<f64>,
    limit: f64,
}

#[derive(Debug, Clone)]
struct Consumer {
    id: String,
    bus: usize,
    demand: f64,
    is_motor: bool,
}

#[derive(Debug, Clone)]
struct SourceData {
    id: String,
    bus: usize,
    max: f64,
    cost: f64,
}

/// Power network compiled to dense indices.
#[derive(Debug, Clone)]
pub struct PowerModel {
    bus_ids: Vec<String>,
    branches: Vec<BranchData>,
    consumers: Vec<Consumer>,
    sources: Vec<SourceData>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerState {
    /// rad
    pub bus_angle: BTreeMap<String, f64>,
    /// MW, positive from `from` to `to`; in-service branches only.
    pub line_flow: BTreeMap<String, f64>,
    /// MW per load and motor.
    pub served_load: BTreeMap<String, f64>,
    pub shed_load: BTreeMap<String, f64>,
    /// MW per source.
    pub generation: BTreeMap<String, f64>,
    pub energized_buses: Vec<String>,
    /// Motors that are in service, energised and fully served.
    pub running_motors: Vec<String>,
}

impl PowerState {
    pub fn total_served(&self) -> f64 {
        self.served_load.values().sum()
    }

    pub fn total_shed(&self) -> f64 {
        self.shed_load.values().sum()
    }

    pub fn motor_running(&self, id: &str) -> bool {
        self.running_motors.iter().any(|m| m == id)
    }
}

impl PowerModel {
    pub fn new(net: &IntegratedNetwork) -> Self {
        let bus_ids: Vec<String> = net
            .power
            .iter()
            .filter(|c| matches!(c.kind, ComponentKind::Bus(_)))
            .map(|c| c.id.clone())
            .collect();
        let idx = |id: &str| bus_ids.iter().position(|b| b == id).expect("validated bus");
        let mut branches = Vec::new();
        let mut consumers = Vec::new();
        let mut sources = Vec::new();
        for c in &net.power {
            match &c.kind {
                ComponentKind::Line(b) | ComponentKind::Transformer(b) => branches.push(BranchData {
                    id: c.id.clone(),
                    from: idx(&b.from),
                    to: idx(&b.to),
                    gain: Some(BASE_MVA * b.susceptance),
                    limit: b.limit_mw,
                }),
                ComponentKind::Switch(s) => branches.push(BranchData {
                    id: c.id.clone(),
                    from: idx(&s.from),
                    to: idx(&s.to),
                    gain: None,
                    limit: f64::INFINITY,
                }),
                ComponentKind::Load(l) => consumers.push(Consumer {
                    id: c.id.clone(),
                    bus: idx(&l.bus),
                    demand: l.demand_mw,
                    is_motor: false,
                }),
                ComponentKind::Motor(m) => consumers.push(Consumer {
                    id: c.id.clone(),
                    bus: idx(&m.bus),
                    demand: m.demand_mw,
                    is_motor: true,
                }),
                ComponentKind::Generator(s) | ComponentKind::ExternalGrid(s) => sources.push(SourceData {
                    id: c.id.clone(),
                    bus: idx(&s.bus),
                    max: s.max_mw,
                    cost: s.cost,
                }),
                _ => {}
            }
        }
        PowerModel { bus_ids, branches, consumers, sources }
    }

    /// Ids of power consumers (loads and motors), in model order.
    pub fn consumer_ids(&self) -> Vec<String> {
        self.consumers.iter().map(|c| c.id.clone()).collect()
    }

    pub fn consumer_demand(&self, id: &str) -> Option<f64> {
        self.consumers.iter().find(|c| c.id == id).map(|c| c.demand)
    }

    pub fn branch_ids(&self) -> Vec<String> {
        self.branches.iter().map(|b| b.id.clone()).collect()
    }

    fn islands(&self, statuses: &Statuses) -> Vec<usize> {
        let n = self.bus_ids.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for b in &self.branches {
            if statuses.in_service(&b.id) {
                let (ra, rb) = (find(&mut parent, b.from), find(&mut parent, b.to));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }

    pub fn solve(&self, statuses: &Statuses) -> Result<PowerState> {
        let island = self.islands(statuses);
        let mut state = PowerState::default();
        for b in &self.bus_ids {
            state.bus_angle.insert(b.clone(), 0.0);
        }
        for c in &self.consumers {
            state.served_load.insert(c.id.clone(), 0.0);
            state.shed_load.insert(c.id.clone(), c.demand);
        }
        for s in &self.sources {
            state.generation.insert(s.id.clone(), 0.0);
        }

        let mut roots: Vec<usize> = self
            .sources
            .iter()
            .filter(|s| statuses.in_service(&s.id) && s.max > 0.0)
            .map(|s| island[s.bus])
            .collect();
        roots.sort_unstable();
        roots.dedup();

        for root in roots {
            let buses: Vec<usize> = (0..self.bus_ids.len()).filter(|&b| island[b] == root).collect();
            self.dispatch_island(&buses, statuses, &mut state)?;
            for &b in &buses {
                state.energized_buses.push(self.bus_ids[b].clone());
            }
        }
        state.energized_buses.sort();

        for c in self.consumers.iter().filter(|c| c.is_motor) {
            let served = state.served_load[&c.id];
            let energized = state.energized_buses.binary_search(&self.bus_ids[c.bus]).is_ok();
            if statuses.in_service(&c.id) && energized && served >= c.demand * (1.0 - 1e-9) {
                state.running_motors.push(c.id.clone());
            }
        }
        Ok(state)
    }

    fn dispatch_island(&self, buses: &[usize], statuses: &Statuses, state: &mut PowerState) -> Result<()> {
        let in_island = |b: usize| buses.binary_search(&b).is_ok();
        let branches: Vec<&BranchData> = self
            .branches
            .iter()
            .filter(|b| statuses.in_service(&b.id) && in_island(b.from))
            .collect();
        // out-of-service consumers draw nothing; they count as shed
        let consumers: Vec<&Consumer> = self
            .consumers
            .iter()
            .filter(|c| in_island(c.bus) && statuses.in_service(&c.id))
            .collect();
        let sources: Vec<&SourceData> = self
            .sources
            .iter()
            .filter(|s| in_island(s.bus) && statuses.in_service(&s.id))
            .collect();
        let total_demand: f64 = consumers.iter().map(|c| c.demand).sum();

        let build = |stage_two: Option<f64>| -> (Problem, Vec<Variable>, Vec<Variable>, Vec<Variable>, Vec<Variable>) {
            let mut lp = Problem::new(OptimizationDirection::Minimize);
            let gen: Vec<Variable> = sources
                .iter()
                .map(|s| lp.add_var(if stage_two.is_some() { s.cost } else { 0.0 }, (0.0, s.max)))
                .collect();
            let shed: Vec<Variable> = consumers
                .iter()
                .map(|c| lp.add_var(if stage_two.is_some() { 0.0 } else { 1.0 }, (0.0, c.demand)))
                .collect();
            let theta: Vec<Variable> = buses
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    let bound = if i == 0 { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
                    lp.add_var(0.0, bound)
                })
                .collect();
            let pos = |b: usize| buses.binary_search(&b).expect("bus in island");
            let flow: Vec<Variable> = branches
                .iter()
                .map(|br| lp.add_var(0.0, (-br.limit, br.limit)))
                .collect();
            for (k, br) in branches.iter().enumerate() {
                let (ta, tb) = (theta[pos(br.from)], theta[pos(br.to)]);
                match br.gain {
                    Some(g) => lp.add_constraint([(flow[k], 1.0), (ta, -g), (tb, g)], ComparisonOp::Eq, 0.0),
                    None => lp.add_constraint([(ta, 1.0), (tb, -1.0)], ComparisonOp::Eq, 0.0),
                }
            }
            for &b in buses {
                let mut row: Vec<(Variable, f64)> = Vec::new();
                let mut rhs = 0.0;
                for (i, s) in sources.iter().enumerate() {
                    if s.bus == b {
                        row.push((gen[i], 1.0));
                    }
                }
                for (i, c) in consumers.iter().enumerate() {
                    if c.bus == b {
                        row.push((shed[i], 1.0));
                        rhs += c.demand;
                    }
                }
                for (k, br) in branches.iter().enumerate() {
                    if br.from == b {
                        row.push((flow[k], -1.0));
                    }
                    if br.to == b {
                        row.push((flow[k], 1.0));
                    }
                }
                lp.add_constraint(row.as_slice(), ComparisonOp::Eq, rhs);
            }
            if let Some(max_shed) = stage_two {
                let row: Vec<(Variable, f64)> = shed.iter().map(|&v| (v, 1.0)).collect();
                lp.add_constraint(row.as_slice(), ComparisonOp::Eq, max_shed);
            }
            (lp, gen, shed, theta, flow)
        };

        let solve = |lp: &Problem| {
            lp.solve()
                .map_err(|e| Error::PowerDispatch(format!("infeasible after full shedding: {e}")))?
                .into_solution()
                .map_err(|_| Error::PowerDispatch("solver interrupted".into()))
        };

        let (lp1, gen, shed, theta, flow) = build(None);
        let first = solve(&lp1)?;
        let min_shed = first.objective().clamp(0.0, total_demand);
        let (lp2, ..) = build(Some(min_shed));
        // the equality can be infeasible by rounding; keep stage one then
        let sol = match solve(&lp2) {
            Ok(sol) => sol,
            Err(_) => first,
        };

        for (i, s) in sources.iter().enumerate() {
            state.generation.insert(s.id.clone(), sol.var_value(gen[i]).max(0.0));
        }
        for (i, c) in consumers.iter().enumerate() {
            let s = sol.var_value(shed[i]).clamp(0.0, c.demand);
            state.shed_load.insert(c.id.clone(), s);
            state.served_load.insert(c.id.clone(), c.demand - s);
        }
        for (i, &b) in buses.iter().enumerate() {
            state.bus_angle.insert(self.bus_ids[b].clone(), sol.var_value(theta[i]));
        }
        for (k, br) in branches.iter().enumerate() {
            state.line_flow.insert(br.id.clone(), sol.var_value(flow[k]));
        }
        Ok(())
    }
}

/// Minimum-shedding DC dispatch of the power network under `statuses`.
pub fn solve_power(net: &IntegratedNetwork, statuses: &Statuses) -> Result<PowerState> {
    PowerModel::new(net).solve(statuses)
}
