//! Grid description: buses, branches, generators.
//!
//! A [`Network`] is validated on construction and immutable afterwards;
//! edits produce a new value. All electrical quantities are per-unit on
//! `base_mva`, angles are radians.

mod case_format;
mod matpower;
mod ybus;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::scalar::Real;

pub use case_format::parse_case;
pub use matpower::convert_matpower;
pub use ybus::{build_ybus, AdmittanceMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

impl BusKind {
    /// Numeric code used in case files (1 = PQ, 2 = PV, 3 = Slack).
    pub fn code(self) -> u8 {
        match self {
            BusKind::PQ => 1,
            BusKind::PV => 2,
            BusKind::Slack => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusKind::PQ),
            2 => Some(BusKind::PV),
            3 => Some(BusKind::Slack),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus<T> {
    pub id: usize,
    pub kind: BusKind,
    pub p_demand: T,
    pub q_demand: T,
    pub g_shunt: T,
    pub b_shunt: T,
    /// Voltage setpoint for Slack/PV buses, initial guess for PQ buses.
    pub v_setpoint: T,
    pub theta_setpoint: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: T,
    pub x: T,
    /// Total line-charging susceptance, split half to each end.
    pub b_charging: T,
    /// Off-nominal turns ratio on the from side; 1.0 for a plain line.
    pub tap: T,
    pub in_service: bool,
}

impl<T: Real> Branch<T> {
    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }

    pub fn touches(&self, bus: usize) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub bus: usize,
    pub p_gen: T,
    pub q_gen: T,
    pub v_setpoint: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    buses: Vec<Bus<T>>,
    branches: Vec<Branch<T>>,
    generators: Vec<Generator<T>>,
    base_mva: T,
    index: HashMap<usize, usize>,
    slack: usize,
}

impl<T: Real> Network<T> {
    /// Validates and assembles a network.
    pub fn new(
        buses: Vec<Bus<T>>,
        branches: Vec<Branch<T>>,
        generators: Vec<Generator<T>>,
        base_mva: T,
    ) -> Result<Self, NetworkError> {
        let sem = |m: String| Err(NetworkError::Semantic(m));
        if buses.is_empty() {
            return sem("network has no buses".into());
        }
        if !(base_mva > T::zero()) || !base_mva.is_finite_value() {
            return sem(format!("base MVA must be positive, got {base_mva}"));
        }
        let mut index = HashMap::with_capacity(buses.len());
        let mut slack: Option<usize> = None;
        for (i, bus) in buses.iter().enumerate() {
            if bus.id == 0 {
                return sem("bus ids must be positive".into());
            }
            if index.insert(bus.id, i).is_some() {
                return sem(format!("duplicate bus id {}", bus.id));
            }
            if bus.kind == BusKind::Slack {
                if let Some(prev) = slack {
                    return sem(format!(
                        "more than one slack bus ({} and {})",
                        buses[prev].id, bus.id
                    ));
                }
                slack = Some(i);
            }
            if bus.kind != BusKind::PQ && !(bus.v_setpoint > T::zero()) {
                return sem(format!("bus {} has nonpositive voltage setpoint", bus.id));
            }
        }
        let Some(slack) = slack else {
            return sem("no slack bus".into());
        };
        for (k, br) in branches.iter().enumerate() {
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return sem(format!("branch {} references unknown bus {end}", k + 1));
                }
            }
            if br.from_bus == br.to_bus {
                return sem(format!(
                    "branch {} connects bus {} to itself",
                    k + 1,
                    br.from_bus
                ));
            }
            if br.in_service && br.r == T::zero() && br.x == T::zero() {
                return sem(format!(
                    "branch {} ({}-{}) has zero impedance",
                    k + 1,
                    br.from_bus,
                    br.to_bus
                ));
            }
            if !(br.tap > T::zero()) {
                return sem(format!("branch {} has nonpositive tap ratio", k + 1));
            }
        }
        for g in &generators {
            if !index.contains_key(&g.bus) {
                return sem(format!("generator references unknown bus {}", g.bus));
            }
        }
        let net = Network {
            buses,
            branches,
            generators,
            base_mva,
            index,
            slack,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<(), NetworkError> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (self.index[&br.from_bus], self.index[&br.to_bus]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(NetworkError::Semantic(format!(
                "bus {} is not connected to the slack bus",
                self.buses[i].id
            ))),
            None => Ok(()),
        }
    }

    pub fn buses(&self) -> &[Bus<T>] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator<T>] {
        &self.generators
    }

    pub fn base_mva(&self) -> T {
        self.base_mva
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Position of `id` in [`Network::buses`].
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus<T>> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    /// Net scheduled injection per bus: generation minus demand.
    pub fn scheduled_injections(&self) -> (Vec<T>, Vec<T>) {
        let mut p: Vec<T> = self.buses.iter().map(|b| -b.p_demand).collect();
        let mut q: Vec<T> = self.buses.iter().map(|b| -b.q_demand).collect();
        for g in &self.generators {
            let i = self.index[&g.bus];
            p[i] += g.p_gen;
            q[i] += g.q_gen;
        }
        (p, q)
    }

    /// Indices of branches between buses `a` and `b`, in file order.
    pub fn branches_between(&self, a: usize, b: usize) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.connects(a, b))
            .map(|(k, _)| k)
            .collect()
    }

    /// Returns a copy with demands and generator outputs replaced.
    ///
    /// Topology is unchanged so no revalidation is needed.
    pub fn with_injections(&self, p_demand: &[T], q_demand: &[T], p_gen: &[T]) -> Self {
        let mut net = self.clone();
        for (bus, (&p, &q)) in net.buses.iter_mut().zip(p_demand.iter().zip(q_demand)) {
            bus.p_demand = p;
            bus.q_demand = q;
        }
        for (g, &p) in net.generators.iter_mut().zip(p_gen) {
            g.p_gen = p;
        }
        net
    }

    /// Returns a copy with every demand multiplied by `factor`.
    pub fn with_scaled_load(&self, factor: T) -> Self {
        let mut net = self.clone();
        for bus in &mut net.buses {
            bus.p_demand *= factor;
            bus.q_demand *= factor;
        }
        net
    }

    /// Applies an edit, returning a new validated network.
    pub fn apply_branch_edit(&self, edit: &BranchEdit<T>) -> Result<Self, NetworkError> {
        let mut branches = self.branches.clone();
        match *edit {
            BranchEdit::RemoveDuplicate { from, to } => {
                let hits = self.branches_between(from, to);
                match hits.len() {
                    0 => {
                        return Err(NetworkError::UnknownBranch(format!("{from}-{to}")));
                    }
                    1 => {
                        return Err(NetworkError::UnknownBranch(format!(
                            "{from}-{to} has a single record, nothing to deduplicate"
                        )));
                    }
                    _ => {
                        branches.remove(*hits.last().unwrap());
                    }
                }
            }
            BranchEdit::SetParameter {
                from,
                to,
                occurrence,
                parameter,
                value,
            } => {
                let hits = self.branches_between(from, to);
                let Some(&k) = hits.get(occurrence) else {
                    return Err(NetworkError::UnknownBranch(format!(
                        "{from}-{to} (record {occurrence})"
                    )));
                };
                let br = &mut branches[k];
                match parameter {
                    BranchParameter::R => br.r = value,
                    BranchParameter::X => br.x = value,
                    BranchParameter::BCharging => br.b_charging = value,
                    BranchParameter::Tap => br.tap = value,
                    BranchParameter::Status => br.in_service = value != T::zero(),
                }
            }
        }
        Network::new(
            self.buses.clone(),
            branches,
            self.generators.clone(),
            self.base_mva,
        )
    }

    /// Returns a copy with one bus's shunt replaced.
    pub fn with_shunt(&self, bus_id: usize, g: T, b: T) -> Result<Self, NetworkError> {
        let i = self
            .bus_index(bus_id)
            .ok_or_else(|| NetworkError::Semantic(format!("unknown bus {bus_id}")))?;
        let mut net = self.clone();
        net.buses[i].g_shunt = g;
        net.buses[i].b_shunt = b;
        Ok(net)
    }

    /// Relabels buses through `perm`: bus at position `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, NetworkError> {
        assert_eq!(perm.len(), self.buses.len());
        let mut buses = self.buses.clone();
        for (i, bus) in self.buses.iter().enumerate() {
            buses[perm[i]] = bus.clone();
        }
        Network::new(
            buses,
            self.branches.clone(),
            self.generators.clone(),
            self.base_mva,
        )
    }

    pub fn to_f64(&self) -> Network<f64> {
        self.map_scalar(|v| v.as_f64())
    }

    pub fn map_scalar<U: Real>(&self, f: impl Fn(T) -> U) -> Network<U> {
        Network {
            buses: self
                .buses
                .iter()
                .map(|b| Bus {
                    id: b.id,
                    kind: b.kind,
                    p_demand: f(b.p_demand),
                    q_demand: f(b.q_demand),
                    g_shunt: f(b.g_shunt),
                    b_shunt: f(b.b_shunt),
                    v_setpoint: f(b.v_setpoint),
                    theta_setpoint: f(b.theta_setpoint),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|br| Branch {
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                    r: f(br.r),
                    x: f(br.x),
                    b_charging: f(br.b_charging),
                    tap: f(br.tap),
                    in_service: br.in_service,
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| Generator {
                    bus: g.bus,
                    p_gen: f(g.p_gen),
                    q_gen: f(g.q_gen),
                    v_setpoint: f(g.v_setpoint),
                })
                .collect(),
            base_mva: f(self.base_mva),
            index: self.index.clone(),
            slack: self.slack,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchParameter {
    R,
    X,
    BCharging,
    Tap,
    Status,
}

/// Modification of a network's branch records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchEdit<T> {
    /// Drops the last of several records between `from` and `to`.
    RemoveDuplicate { from: usize, to: usize },
    /// Sets one parameter of the `occurrence`-th (0-based) record between `from` and `to`.
    SetParameter {
        from: usize,
        to: usize,
        #[serde(default)]
        occurrence: usize,
        parameter: BranchParameter,
        value: T,
    },
}

impl<T: Real> fmt::Display for BranchEdit<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchEdit::RemoveDuplicate { from, to } => {
                write!(f, "remove duplicate {from}-{to}")
            }
            BranchEdit::SetParameter {
                from,
                to,
                occurrence,
                parameter,
                value,
            } => write!(
                f,
                "set {parameter:?} of {from}-{to}#{occurrence} to {value}"
            ),
        }
    }
}
