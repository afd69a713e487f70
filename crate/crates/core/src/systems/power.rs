//! Power-network measurement model for forecasting-aided state estimation.
//!
//! The state is `[a_2, …, a_L, V_1, …, V_L]`: voltage angles (radians) of
//! every bus except the reference bus, followed by all voltage magnitudes
//! (per unit). Measurements are evaluated from the complex bus admittance
//! matrix with the usual π branch model, including off-nominal taps.
//!
//! # Network file
//!
//! JSON object with `buses`, `branches` and an optional `measurements`
//! array (see `data/ieee14.json`). Quantities are per unit on `base_mva`;
//! bus angles are given in degrees (`va_deg`). When `measurements` is
//! omitted the plan is every voltage magnitude plus the real and reactive
//! injections at all non-reference buses.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::StateSpaceModel;

/// The IEEE 14-bus test case with its solved base-case voltages.
pub const IEEE14_JSON: &str = include_str!("../../data/ieee14.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub bus_type: BusType,
    pub vm: f64,
    /// Radians.
    pub va: f64,
    pub gs: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub tap: f64,
    /// Series conductance of `1/(r + jx)`.
    pub g_series: f64,
    /// Series susceptance of `1/(r + jx)`.
    pub b_series: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Vmag,
    Pinj,
    Qinj,
    Pflow,
    Qflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measurement {
    Vmag { bus: u32 },
    Pinj { bus: u32 },
    Qinj { bus: u32 },
    /// Flow leaving `from` on the branch between `from` and `to`.
    Pflow { from: u32, to: u32 },
    Qflow { from: u32, to: u32 },
}

impl Measurement {
    pub fn kind(&self) -> MeasurementKind {
        match self {
            Self::Vmag { .. } => MeasurementKind::Vmag,
            Self::Pinj { .. } => MeasurementKind::Pinj,
            Self::Qinj { .. } => MeasurementKind::Qinj,
            Self::Pflow { .. } => MeasurementKind::Pflow,
            Self::Qflow { .. } => MeasurementKind::Qflow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetworkFormat {
    #[default]
    Json,
}

/// Resolved measurement: bus indices plus the branch admittances it needs.
#[derive(Debug, Clone, Copy)]
enum Row {
    Vmag(usize),
    Inj { bus: usize, reactive: bool },
    Flow { a: usize, b: usize, y_aa: Complex64, y_ab: Complex64, reactive: bool },
}

#[derive(Debug, Clone)]
pub struct PowerNetwork {
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub measurements: Vec<Measurement>,
    reference: usize,
    ybus: Vec<Complex64>,
    rows: Vec<Row>,
    /// State index of each bus angle (`None` for the reference bus).
    angle_index: Vec<Option<usize>>,
}

#[derive(Deserialize)]
struct RawNetwork {
    name: Option<String>,
    buses: Option<Vec<RawBus>>,
    branches: Option<Vec<RawBranch>>,
    measurements: Option<Vec<RawMeasurement>>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
struct RawBus {
    id: Option<u32>,
    #[serde(rename = "type")]
    bus_type: Option<BusType>,
    vm: Option<f64>,
    va_deg: Option<f64>,
    gs: Option<f64>,
    bs: Option<f64>,
}

#[derive(Deserialize)]
struct RawBranch {
    from: Option<u32>,
    to: Option<u32>,
    r: Option<f64>,
    x: Option<f64>,
    b: Option<f64>,
    tap: Option<f64>,
}

#[derive(Deserialize)]
struct RawMeasurement {
    kind: Option<MeasurementKind>,
    bus: Option<u32>,
    from: Option<u32>,
    to: Option<u32>,
}

fn required<T>(v: Option<T>, field: impl FnOnce() -> String) -> Result<T> {
    v.ok_or_else(|| Error::Validation(format!("missing field `{}`", field())))
}

fn finite(v: f64, field: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Validation(format!("field `{}` is not finite", field())))
    }
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>, format: NetworkFormat) -> Result<PowerNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match format {
        NetworkFormat::Json => PowerNetwork::from_json_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
            other => other,
        }),
    }
}

impl PowerNetwork {
    pub fn ieee14() -> Self {
        Self::from_json_str(IEEE14_JSON).expect("bundled IEEE 14-bus file is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<memory>".into(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawNetwork) -> Result<Self> {
        let raw_buses = required(raw.buses, || "buses".into())?;
        let raw_branches = required(raw.branches, || "branches".into())?;
        if raw_buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }

        let mut buses = Vec::with_capacity(raw_buses.len());
        for (i, b) in raw_buses.into_iter().enumerate() {
            let f = |name: &str| format!("buses[{i}].{name}");
            let vm = finite(required(b.vm, || f("vm"))?, || f("vm"))?;
            if !(vm > 0.0) {
                return Err(Error::Validation(format!("field `{}` must be positive", f("vm"))));
            }
            buses.push(Bus {
                id: required(b.id, || f("id"))?,
                bus_type: required(b.bus_type, || f("type"))?,
                vm,
                va: finite(required(b.va_deg, || f("va_deg"))?, || f("va_deg"))?.to_radians(),
                gs: finite(b.gs.unwrap_or(0.0), || f("gs"))?,
                bs: finite(b.bs.unwrap_or(0.0), || f("bs"))?,
            });
        }
        let mut index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        let slacks: Vec<usize> =
            buses.iter().enumerate().filter(|(_, b)| b.bus_type == BusType::Slack).map(|(i, _)| i).collect();
        if slacks.len() != 1 {
            return Err(Error::Validation(format!("expected exactly one slack bus, found {}", slacks.len())));
        }
        let reference = slacks[0];

        let mut branches = Vec::with_capacity(raw_branches.len());
        let mut seen = BTreeSet::new();
        for (i, br) in raw_branches.into_iter().enumerate() {
            let f = |name: &str| format!("branches[{i}].{name}");
            let from = required(br.from, || f("from"))?;
            let to = required(br.to, || f("to"))?;
            for id in [from, to] {
                if !index.contains_key(&id) {
                    return Err(Error::Validation(format!("{} refers to unknown bus {id}", f("from/to"))));
                }
            }
            if from == to {
                return Err(Error::Validation(format!("{} connects bus {from} to itself", f("to"))));
            }
            if !seen.insert((from.min(to), from.max(to))) {
                return Err(Error::Validation(format!("duplicate branch between buses {from} and {to}")));
            }
            let r = finite(required(br.r, || f("r"))?, || f("r"))?;
            let x = finite(required(br.x, || f("x"))?, || f("x"))?;
            if r == 0.0 && x == 0.0 {
                return Err(Error::Validation(format!("{} has zero impedance", f("x"))));
            }
            let b = finite(br.b.unwrap_or(0.0), || f("b"))?;
            let tap = finite(br.tap.unwrap_or(1.0), || f("tap"))?;
            let tap = if tap == 0.0 { 1.0 } else { tap };
            let ys = Complex64::new(r, x).inv();
            branches.push(Branch { from, to, r, x, b, tap, g_series: ys.re, b_series: ys.im });
        }

        // connectivity
        let n = buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &branches {
            let (a, b) = (index[&br.from], index[&br.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([reference]);
        visited[reference] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(Error::Validation(format!("network is disconnected: bus {} is unreachable", buses[i].id)));
        }

        let measurements = match raw.measurements {
            Some(ms) => {
                let mut out = Vec::with_capacity(ms.len());
                for (i, m) in ms.into_iter().enumerate() {
                    let f = |name: &str| format!("measurements[{i}].{name}");
                    let kind = required(m.kind, || f("kind"))?;
                    out.push(match kind {
                        MeasurementKind::Vmag => Measurement::Vmag { bus: required(m.bus, || f("bus"))? },
                        MeasurementKind::Pinj => Measurement::Pinj { bus: required(m.bus, || f("bus"))? },
                        MeasurementKind::Qinj => Measurement::Qinj { bus: required(m.bus, || f("bus"))? },
                        MeasurementKind::Pflow => Measurement::Pflow {
                            from: required(m.from, || f("from"))?,
                            to: required(m.to, || f("to"))?,
                        },
                        MeasurementKind::Qflow => Measurement::Qflow {
                            from: required(m.from, || f("from"))?,
                            to: required(m.to, || f("to"))?,
                        },
                    });
                }
                out
            }
            None => Self::default_plan(&buses, reference),
        };
        if measurements.is_empty() {
            return Err(Error::Validation("measurement plan is empty".into()));
        }

        let mut angle_index = vec![None; n];
        let mut k = 0;
        for (i, slot) in angle_index.iter_mut().enumerate() {
            if i != reference {
                *slot = Some(k);
                k += 1;
            }
        }

        let mut net = Self {
            name: raw.name.unwrap_or_else(|| "network".into()),
            buses,
            branches,
            measurements,
            reference,
            ybus: Vec::new(),
            rows: Vec::new(),
            angle_index,
        };
        net.ybus = net.build_ybus(&index);
        net.rows = net.resolve_rows(&index)?;
        Ok(net)
    }

    fn default_plan(buses: &[Bus], reference: usize) -> Vec<Measurement> {
        let mut plan: Vec<Measurement> = buses.iter().map(|b| Measurement::Vmag { bus: b.id }).collect();
        let others = buses.iter().enumerate().filter(|(i, _)| *i != reference);
        plan.extend(others.clone().map(|(_, b)| Measurement::Pinj { bus: b.id }));
        plan.extend(others.map(|(_, b)| Measurement::Qinj { bus: b.id }));
        plan
    }

    /// The four π-model admittances `(y_ff, y_ft, y_tf, y_tt)` of a branch.
    fn branch_admittances(br: &Branch) -> (Complex64, Complex64, Complex64, Complex64) {
        let ys = Complex64::new(br.g_series, br.b_series);
        let ytt = ys + Complex64::new(0.0, br.b / 2.0);
        let t = br.tap;
        (ytt / (t * t), -ys / t, -ys / t, ytt)
    }

    fn build_ybus(&self, index: &HashMap<u32, usize>) -> Vec<Complex64> {
        let n = self.buses.len();
        let mut y = vec![Complex64::new(0.0, 0.0); n * n];
        for br in &self.branches {
            let (f, t) = (index[&br.from], index[&br.to]);
            let (yff, yft, ytf, ytt) = Self::branch_admittances(br);
            y[f * n + f] += yff;
            y[f * n + t] += yft;
            y[t * n + f] += ytf;
            y[t * n + t] += ytt;
        }
        for (i, b) in self.buses.iter().enumerate() {
            y[i * n + i] += Complex64::new(b.gs, b.bs);
        }
        y
    }

    fn resolve_rows(&self, index: &HashMap<u32, usize>) -> Result<Vec<Row>> {
        let bus = |id: u32| {
            index.get(&id).copied().ok_or_else(|| Error::UnknownMeasurementLocation(format!("bus {id}")))
        };
        self.measurements
            .iter()
            .map(|m| {
                Ok(match *m {
                    Measurement::Vmag { bus: b } => Row::Vmag(bus(b)?),
                    Measurement::Pinj { bus: b } => Row::Inj { bus: bus(b)?, reactive: false },
                    Measurement::Qinj { bus: b } => Row::Inj { bus: bus(b)?, reactive: true },
                    Measurement::Pflow { from, to } | Measurement::Qflow { from, to } => {
                        let reactive = matches!(m, Measurement::Qflow { .. });
                        let br = self
                            .branches
                            .iter()
                            .find(|br| (br.from == from && br.to == to) || (br.from == to && br.to == from))
                            .ok_or_else(|| Error::UnknownMeasurementLocation(format!("branch {from}-{to}")))?;
                        let (yff, yft, ytf, ytt) = Self::branch_admittances(br);
                        let (y_aa, y_ab) = if br.from == from { (yff, yft) } else { (ytt, ytf) };
                        Row::Flow { a: bus(from)?, b: bus(to)?, y_aa, y_ab, reactive }
                    }
                })
            })
            .collect()
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// `2L − 1`.
    pub fn state_dim(&self) -> usize {
        2 * self.buses.len() - 1
    }

    pub fn meas_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn reference_bus(&self) -> usize {
        self.reference
    }

    /// Number of angle entries at the front of the state vector.
    pub fn angle_count(&self) -> usize {
        self.buses.len() - 1
    }

    /// `Y_bus[i][j]` for bus positions `i`, `j` in file order.
    pub fn admittance(&self, i: usize, j: usize) -> Complex64 {
        self.ybus[i * self.buses.len() + j]
    }

    /// State built from the voltages stored in the file.
    pub fn base_state(&self) -> Vector {
        let mut x = Vector::zeros(self.state_dim());
        for (i, b) in self.buses.iter().enumerate() {
            if let Some(k) = self.angle_index[i] {
                x[k] = b.va;
            }
            x[self.angle_count() + i] = b.vm;
        }
        x
    }

    /// All magnitudes 1 p.u., all angles 0.
    pub fn flat_start(&self) -> Vector {
        let mut x = Vector::zeros(self.state_dim());
        x.rows_mut(self.angle_count(), self.buses.len()).fill(1.0);
        x
    }

    /// `(magnitude, angle)` of every bus for a state vector.
    pub fn polar_voltages(&self, x: &Vector) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "power state",
                expected: self.state_dim(),
                found: x.len(),
            });
        }
        let na = self.angle_count();
        let vm: Vec<f64> = (0..self.buses.len()).map(|i| x[na + i]).collect();
        let va: Vec<f64> = (0..self.buses.len())
            .map(|i| self.angle_index[i].map_or(self.buses[self.reference].va, |k| x[k]))
            .collect();
        Ok((vm, va))
    }

    fn phasors(&self, x: &Vector) -> Result<Vec<Complex64>> {
        let (vm, va) = self.polar_voltages(x)?;
        Ok(vm.iter().zip(&va).map(|(m, a)| Complex64::from_polar(*m, *a)).collect())
    }

    fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n).map(|i| (0..n).map(|j| self.ybus[i * n + j] * v[j]).sum()).collect()
    }

    /// Measurement vector in plan order.
    pub fn power_h(&self, x: &Vector) -> Result<Vector> {
        let v = self.phasors(x)?;
        let cur = self.currents(&v);
        let z = self.rows.iter().map(|row| match *row {
            Row::Vmag(i) => v[i].norm(),
            Row::Inj { bus, reactive } => {
                let s = v[bus] * cur[bus].conj();
                if reactive {
                    s.im
                } else {
                    s.re
                }
            }
            Row::Flow { a, b, y_aa, y_ab, reactive } => {
                let s = v[a] * (y_aa * v[a] + y_ab * v[b]).conj();
                if reactive {
                    s.im
                } else {
                    s.re
                }
            }
        });
        Ok(Vector::from_iterator(self.rows.len(), z))
    }

    /// Analytic `∂h/∂x` in plan order.
    pub fn power_jacobian(&self, x: &Vector) -> Result<Mat> {
        let v = self.phasors(x)?;
        let cur = self.currents(&v);
        let n = v.len();
        let na = self.angle_count();
        let j = Complex64::new(0.0, 1.0);
        let mut jac = Mat::zeros(self.rows.len(), self.state_dim());

        // dV_k for an angle step and a magnitude step at bus k
        let d_angle: Vec<Complex64> = v.iter().map(|vk| j * vk).collect();
        let d_mag: Vec<Complex64> = v.iter().map(|vk| vk / vk.norm()).collect();
        let pick = |s: Complex64, reactive: bool| if reactive { s.im } else { s.re };

        for (r, row) in self.rows.iter().enumerate() {
            match *row {
                Row::Vmag(i) => jac[(r, na + i)] = 1.0,
                Row::Inj { bus, reactive } => {
                    for k in 0..n {
                        let y = self.ybus[bus * n + k];
                        for (dv, col) in
                            [(d_angle[k], self.angle_index[k]), (d_mag[k], Some(na + k))]
                        {
                            let Some(col) = col else { continue };
                            let mut ds = v[bus] * (y * dv).conj();
                            if k == bus {
                                ds += dv * cur[bus].conj();
                            }
                            jac[(r, col)] = pick(ds, reactive);
                        }
                    }
                }
                Row::Flow { a, b, y_aa, y_ab, reactive } => {
                    let ia = y_aa * v[a] + y_ab * v[b];
                    for (k, y) in [(a, y_aa), (b, y_ab)] {
                        for (dv, col) in
                            [(d_angle[k], self.angle_index[k]), (d_mag[k], Some(na + k))]
                        {
                            let Some(col) = col else { continue };
                            let mut ds = v[a] * (y * dv).conj();
                            if k == a {
                                ds += dv * ia.conj();
                            }
                            jac[(r, col)] = pick(ds, reactive);
                        }
                    }
                }
            }
        }
        Ok(jac)
    }
}

/// Random-walk FASE model over a [`PowerNetwork`].
#[derive(Debug, Clone)]
pub struct PowerSystem {
    pub network: PowerNetwork,
}

impl PowerSystem {
    pub fn new(network: PowerNetwork) -> Self {
        Self { network }
    }
}

impl StateSpaceModel for PowerSystem {
    fn state_dim(&self) -> usize {
        self.network.state_dim()
    }

    fn meas_dim(&self) -> usize {
        self.network.meas_dim()
    }

    fn transition(&self, x: &Vector, _k: usize) -> Vector {
        x.clone()
    }

    fn measure(&self, x: &Vector) -> Vector {
        self.network
            .power_h(x)
            .unwrap_or_else(|_| Vector::from_element(self.network.meas_dim(), f64::NAN))
    }

    fn measurement_jacobian(&self, x: &Vector) -> Option<Mat> {
        self.network.power_jacobian(x).ok()
    }
}
