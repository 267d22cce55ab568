//! Plain-text DAG format for hand-built MDPs.
//!
//! ```text
//! # comment
//! initial 0
//! 0 0 1          # parent action child
//! 0 1 2
//! terminal 3 0.0 # id log_target
//! ```
//!
//! Node ids are arbitrary non-negative integers; parsing re-indexes them in
//! topological order through [`crate::mdp::enumerate`]. The actions of each
//! node must be exactly `0..k`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::mdp::{enumerate, EnumeratedMdp, Environment, MdpError, DEFAULT_MAX_STATES};

/// Parsed but not yet enumerated DAG description.
#[derive(Debug, Clone, Default)]
pub struct DagSpec {
    initial: Option<u64>,
    // node -> action -> child
    edges: BTreeMap<u64, BTreeMap<usize, u64>>,
    // node -> parents in file order
    parents: HashMap<u64, Vec<(u64, usize)>>,
    terminals: BTreeMap<u64, f64>,
}

fn perr(line: usize, message: impl Into<String>) -> MdpError {
    MdpError::Parse {
        line,
        message: message.into(),
    }
}

impl DagSpec {
    pub fn parse(text: &str) -> Result<Self, MdpError> {
        let mut spec = DagSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let id = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| perr(line, format!("invalid node id `{s}`")))
            };
            match fields.as_slice() {
                ["initial", n] => {
                    if spec.initial.replace(id(n)?).is_some() {
                        return Err(perr(line, "more than one initial state"));
                    }
                }
                ["terminal", n, lt] => {
                    let lt: f64 = lt
                        .parse()
                        .map_err(|_| perr(line, format!("invalid log target `{lt}`")))?;
                    if spec.terminals.insert(id(n)?, lt).is_some() {
                        return Err(perr(line, "terminal declared twice"));
                    }
                }
                [p, a, c] => {
                    let (p, c) = (id(p)?, id(c)?);
                    let a: usize = a
                        .parse()
                        .map_err(|_| perr(line, format!("invalid action id `{a}`")))?;
                    if spec.edges.entry(p).or_default().insert(a, c).is_some() {
                        return Err(perr(line, format!("action {a} of node {p} declared twice")));
                    }
                    spec.parents.entry(c).or_default().push((p, a));
                }
                _ => return Err(perr(line, format!("unrecognized line `{content}`"))),
            }
        }
        if spec.initial.is_none() {
            return Err(perr(0, "missing `initial` line"));
        }
        for (node, acts) in &spec.edges {
            if acts.keys().enumerate().any(|(k, &a)| k != a) {
                return Err(perr(0, format!("actions of node {node} are not 0..k")));
            }
            if spec.terminals.contains_key(node) {
                return Err(perr(0, format!("terminal node {node} has outgoing edges")));
            }
        }
        // unreachable nodes are dropped, so they cannot be parents either
        let mut reachable = HashSet::new();
        let mut stack = vec![spec.initial.expect("checked above")];
        while let Some(n) = stack.pop() {
            if reachable.insert(n) {
                stack.extend(
                    spec.edges
                        .get(&n)
                        .into_iter()
                        .flat_map(|acts| acts.values().copied()),
                );
            }
        }
        for ps in spec.parents.values_mut() {
            ps.retain(|(p, _)| reachable.contains(p));
        }
        Ok(spec)
    }

    pub fn to_mdp(&self) -> Result<EnumeratedMdp, MdpError> {
        enumerate(self, DEFAULT_MAX_STATES)
    }
}

impl Environment for DagSpec {
    type State = u64;

    fn initial_state(&self) -> u64 {
        self.initial.expect("validated at parse time")
    }

    fn num_actions(&self, state: &u64) -> usize {
        self.edges.get(state).map_or(0, BTreeMap::len)
    }

    fn step(&self, state: &u64, action: usize) -> u64 {
        self.edges[state][&action]
    }

    fn is_terminal(&self, state: &u64) -> bool {
        self.terminals.contains_key(state)
    }

    fn log_target(&self, state: &u64) -> f64 {
        self.terminals[state]
    }

    fn parents(&self, state: &u64) -> Vec<(u64, usize)> {
        self.parents.get(state).cloned().unwrap_or_default()
    }

    fn encode(&self, state: &u64) -> Vec<u8> {
        state.to_string().into_bytes()
    }
}

/// Parses the text format straight into an enumerated MDP.
pub fn parse_dag(text: &str) -> Result<EnumeratedMdp, MdpError> {
    DagSpec::parse(text)?.to_mdp()
}

/// Writes an MDP in the text format using its state indices as node ids.
/// Edges are grouped by child in parent-list order, so parsing the output
/// reproduces the same indices and parent order.
pub fn write_dag(mdp: &EnumeratedMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# states {} edges {} terminals {}",
        mdp.num_states(),
        mdp.num_edges(),
        mdp.num_terminals()
    );
    for &s in mdp.initials() {
        let _ = writeln!(out, "initial {s}");
    }
    for s in mdp.state_ids() {
        for &(p, a) in mdp.parents(s) {
            let _ = writeln!(out, "{p} {a} {s}");
        }
    }
    for t in mdp.terminals() {
        let _ = writeln!(out, "terminal {t} {}", mdp.log_target(t));
    }
    out
}
