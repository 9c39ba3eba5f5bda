//! Power-network data model, case-file I/O and DC power-flow matrices.
//!
//! Susceptances and line capacities are stored per-unit / MW as in the case
//! file; [`SusceptanceMatrix`] and [`FlowMatrix`] are per-unit. Demands and
//! generation elsewhere in the crate are in MW, so consumers multiply by
//! `base_mva` to obtain MW-valued injections from angles in radians.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RldError};

/// A transmission line between two buses (0-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit susceptance, strictly positive.
    pub susceptance: f64,
    /// Thermal limit in MW, strictly positive.
    pub capacity_mw: f64,
}

/// A DC network with first-stage (`alpha`) and real-time (`beta`) unit costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(rename = "buses")]
    pub n_bus: usize,
    pub reference_bus: usize,
    pub lines: Vec<Line>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_cost_violation: bool,
}

fn default_base_mva() -> f64 {
    100.0
}

/// Dense per-unit nodal susceptance matrix `B` (a weighted graph Laplacian).
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptanceMatrix(pub DMatrix<f64>);

/// Dense per-unit branch flow matrix `F`; row `l` is `b_l (e_from - e_to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix(pub DMatrix<f64>);

/// One invariant violation found by [`validate_case`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl NetworkCase {
    pub fn n_line(&self) -> usize {
        self.lines.len()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.capacity_mw).collect()
    }

    /// Parses and validates a case from its JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let case: NetworkCase =
            serde_json::from_str(text).map_err(|e| RldError::Parse(format!("case file: {e}")))?;
        case.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    /// Returns `self` if [`validate_case`] reports nothing.
    pub fn validated(self) -> Result<Self> {
        let diags = validate_case(&self);
        if diags.is_empty() {
            Ok(self)
        } else {
            let msg = diags
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(RldError::Validation(msg))
        }
    }

    /// Deterministic mid-size test network: a ring over `n_bus` buses plus
    /// `extra_lines` random chords, with bus-varying costs.
    pub fn synthetic(n_bus: usize, extra_lines: usize, capacity_mw: f64, seed: u64) -> Self {
        assert!(n_bus >= 2, "synthetic case needs at least two buses");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lines = Vec::with_capacity(n_bus + extra_lines);
        let mut push = |from: usize, to: usize, rng: &mut ChaCha8Rng| {
            lines.push(Line {
                from,
                to,
                susceptance: rng.random_range(5.0..40.0),
                capacity_mw: capacity_mw * rng.random_range(0.5..1.5),
            });
        };
        for i in 0..n_bus {
            let j = (i + 1) % n_bus;
            if n_bus == 2 && i == 1 {
                break;
            }
            push(i, j, &mut rng);
        }
        for _ in 0..extra_lines {
            let a = rng.random_range(0..n_bus);
            let mut b = rng.random_range(0..n_bus);
            while b == a {
                b = rng.random_range(0..n_bus);
            }
            push(a, b, &mut rng);
        }
        let alpha: Vec<f64> = (0..n_bus).map(|_| rng.random_range(10.0..40.0)).collect();
        let beta = vec![80.0; n_bus];
        NetworkCase {
            name: format!("synthetic-{n_bus}"),
            base_mva: 100.0,
            n_bus,
            reference_bus: 0,
            lines,
            alpha,
            beta,
            allow_cost_violation: false,
        }
    }
}

/// Reads, parses and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RldError::io(path, e))?;
    NetworkCase::from_json(&text)
}

pub fn save_case(case: &NetworkCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, case.to_json()).map_err(|e| RldError::io(path, e))
}

/// Lists every invariant violation of `case`. Empty for a valid case.
pub fn validate_case(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |location: String, message: String| out.push(Diagnostic { location, message });
    let n = case.n_bus;

    if n == 0 {
        diag("buses".into(), "case must have at least one bus".into());
    }
    if !(case.base_mva.is_finite() && case.base_mva > 0.0) {
        diag("base_mva".into(), format!("must be positive, got {}", case.base_mva));
    }
    if case.reference_bus >= n.max(1) {
        diag(
            "reference_bus".into(),
            format!("index {} out of range [0, {n})", case.reference_bus),
        );
    }

    let mut endpoints_ok = true;
    for (idx, line) in case.lines.iter().enumerate() {
        let loc = format!("lines[{idx}]");
        if line.from >= n || line.to >= n {
            endpoints_ok = false;
            diag(
                loc.clone(),
                format!("bus index out of range ({} -> {}, {n} buses)", line.from, line.to),
            );
        } else if line.from == line.to {
            endpoints_ok = false;
            diag(loc.clone(), format!("self-loop at bus {}", line.from));
        }
        if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
            diag(loc.clone(), format!("susceptance must be positive, got {}", line.susceptance));
        }
        if !(line.capacity_mw.is_finite() && line.capacity_mw > 0.0) {
            diag(loc, format!("capacity_mw must be positive, got {}", line.capacity_mw));
        }
    }

    if endpoints_ok && n > 0 {
        let components = connected_components(n, case.lines.iter().map(|l| (l.from, l.to)));
        if components > 1 {
            diag(
                "lines".into(),
                format!("network is disconnected ({components} islands)"),
            );
        }
    }

    for (label, v) in [("alpha", &case.alpha), ("beta", &case.beta)] {
        if v.len() != n {
            diag(label.into(), format!("length {} does not match {n} buses", v.len()));
        }
        for (i, x) in v.iter().enumerate() {
            if !x.is_finite() {
                diag(format!("{label}[{i}]"), format!("non-finite value {x}"));
            }
        }
    }
    for (i, a) in case.alpha.iter().enumerate() {
        if *a < 0.0 {
            diag(format!("alpha[{i}]"), format!("must be nonnegative, got {a}"));
        }
    }
    if !case.allow_cost_violation && case.alpha.len() == case.beta.len() {
        for (i, (a, b)) in case.alpha.iter().zip(&case.beta).enumerate() {
            if b <= a {
                diag(
                    format!("beta[{i}]"),
                    format!("cost ordering violated: beta {b} must exceed alpha {a}"),
                );
            }
        }
    }
    out
}

/// Counts connected components with a BFS over the undirected line graph.
fn connected_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Signed line-bus incidence matrix: `+1` at `from`, `-1` at `to`.
pub fn incidence_matrix(case: &NetworkCase) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(case.n_line(), case.n_bus);
    for (l, line) in case.lines.iter().enumerate() {
        a[(l, line.from)] = 1.0;
        a[(l, line.to)] = -1.0;
    }
    a
}

pub fn build_susceptance(case: &NetworkCase) -> SusceptanceMatrix {
    let mut b = DMatrix::zeros(case.n_bus, case.n_bus);
    for line in &case.lines {
        let (i, j, s) = (line.from, line.to, line.susceptance);
        b[(i, i)] += s;
        b[(j, j)] += s;
        b[(i, j)] -= s;
        b[(j, i)] -= s;
    }
    SusceptanceMatrix(b)
}

pub fn build_flow_matrix(case: &NetworkCase) -> FlowMatrix {
    let mut f = DMatrix::zeros(case.n_line(), case.n_bus);
    for (l, line) in case.lines.iter().enumerate() {
        f[(l, line.from)] = line.susceptance;
        f[(l, line.to)] = -line.susceptance;
    }
    FlowMatrix(f)
}
