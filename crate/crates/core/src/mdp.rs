//! Acyclic deterministic MDPs: the environment contract, enumeration of the
//! reachable state DAG in topological order, inversion, and validation.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default cap on the number of reachable states visited by [`enumerate`].
pub const DEFAULT_MAX_STATES: usize = 1_000_000;

/// Dense index into an enumerated state table. Indices follow a topological
/// order: every edge `s -> s'` has `s < s'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub usize);

/// Action index, local to the action mask of the state it is used with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("cycle detected: state {0} reaches itself")]
    CycleDetected(String),
    #[error("reachable state count exceeds the budget of {0}")]
    StateBudgetExceeded(usize),
    #[error("parent function disagrees with the transition function at edge {parent} --{action}--> {child}")]
    ParentMismatch {
        parent: String,
        action: usize,
        child: String,
    },
    #[error("non-terminal state {0} has no actions")]
    DeadEnd(String),
    #[error("trajectory enumeration exceeded the budget of {0} trajectories")]
    TrajectoryBudgetExceeded(usize),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A deterministic, acyclic environment with a single initial state.
///
/// `parents` must be the exact inverse of `step`: `(s, a)` is listed in
/// `parents(step(s, a))` and every listed pair replays to the child.
pub trait Environment {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Size of the action mask at `state`. Terminal states have no actions.
    fn num_actions(&self, state: &Self::State) -> usize;

    fn step(&self, state: &Self::State, action: usize) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Log of the unnormalized target. Only consulted on terminal states.
    fn log_target(&self, state: &Self::State) -> f64;

    fn parents(&self, state: &Self::State) -> Vec<(Self::State, usize)>;

    /// Canonical byte encoding; states are deduplicated by exact byte equality.
    fn encode(&self, state: &Self::State) -> Vec<u8>;
}

/// One transition `from --action--> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
}

/// A complete trajectory from an initial state to a terminal state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    start: StateId,
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(start: StateId) -> Self {
        Self {
            start,
            steps: Vec::new(),
        }
    }

    pub fn from_steps(start: StateId, steps: Vec<Step>) -> Self {
        debug_assert!(steps.first().is_none_or(|s| s.from == start));
        debug_assert!(steps.windows(2).all(|w| w[0].to == w[1].from));
        Self { start, steps }
    }

    pub fn push(&mut self, action: ActionId, to: StateId) {
        let from = self.end();
        self.steps.push(Step { from, action, to });
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn end(&self) -> StateId {
        self.steps.last().map_or(self.start, |s| s.to)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The `len() + 1` visited states, in order.
    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.to))
    }
}

/// The reachable state DAG of an environment, indexed in topological order.
///
/// `children[s]` lists `(action, child)` sorted by action; `parents[s']` lists
/// `(parent, action)` in the order the environment reports them. A forward
/// MDP has exactly one initial state; an inverted MDP may have several.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedMdp {
    states: Vec<Vec<u8>>,
    children: Vec<Vec<(ActionId, StateId)>>,
    parents: Vec<Vec<(StateId, ActionId)>>,
    terminal: Vec<bool>,
    log_target: Vec<f64>,
    initials: Vec<StateId>,
    // parent_slot[s][k] = position of (s, children[s][k].0) in parents[child]
    parent_slot: Vec<Vec<usize>>,
}

impl EnumeratedMdp {
    /// Assembles an MDP from raw tables without checking invariants; run
    /// [`validate`] to diagnose hand-built tables.
    pub fn from_parts(
        states: Vec<Vec<u8>>,
        children: Vec<Vec<(ActionId, StateId)>>,
        parents: Vec<Vec<(StateId, ActionId)>>,
        terminal: Vec<bool>,
        log_target: Vec<f64>,
        initials: Vec<StateId>,
    ) -> Self {
        let parent_slot = children
            .iter()
            .enumerate()
            .map(|(s, kids)| {
                kids.iter()
                    .map(|&(a, c)| {
                        parents
                            .get(c.0)
                            .and_then(|ps| ps.iter().position(|&(p, pa)| p.0 == s && pa == a))
                            .unwrap_or(usize::MAX)
                    })
                    .collect()
            })
            .collect();
        Self {
            states,
            children,
            parents,
            terminal,
            log_target,
            initials,
            parent_slot,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_edges(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn state_ids(
        &self,
    ) -> impl DoubleEndedIterator<Item = StateId> + ExactSizeIterator + Clone {
        (0..self.states.len()).map(StateId)
    }

    pub fn encoding(&self, s: StateId) -> &[u8] {
        &self.states[s.0]
    }

    pub fn children(&self, s: StateId) -> &[(ActionId, StateId)] {
        &self.children[s.0]
    }

    pub fn parents(&self, s: StateId) -> &[(StateId, ActionId)] {
        &self.parents[s.0]
    }

    /// Child reached by taking `action` at `s`.
    pub fn child(&self, s: StateId, action: ActionId) -> StateId {
        self.children[s.0][action.0].1
    }

    /// Position of the edge `s --action-->` within the parent list of its child.
    pub fn parent_slot(&self, s: StateId, action: ActionId) -> usize {
        self.parent_slot[s.0][action.0]
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s.0]
    }

    pub fn terminals(&self) -> impl Iterator<Item = StateId> + Clone + '_ {
        self.state_ids().filter(|&s| self.terminal[s.0])
    }

    pub fn num_terminals(&self) -> usize {
        self.terminal.iter().filter(|&&t| t).count()
    }

    pub fn log_target(&self, s: StateId) -> f64 {
        self.log_target[s.0]
    }

    pub fn log_targets(&self) -> &[f64] {
        &self.log_target
    }

    pub fn is_initial(&self, s: StateId) -> bool {
        self.initials.contains(&s)
    }

    /// The first initial state. Forward MDPs have exactly one.
    pub fn initial(&self) -> StateId {
        self.initials[0]
    }

    pub fn initials(&self) -> &[StateId] {
        &self.initials
    }

    /// False for inverted MDPs with several initial-role states; consumers
    /// that need a unique start state reject those.
    pub fn has_single_initial(&self) -> bool {
        self.initials.len() == 1
    }

    /// Same structure with the log-target replaced on terminal states.
    pub fn with_log_targets(&self, log_target: Vec<f64>) -> Self {
        assert_eq!(log_target.len(), self.num_states());
        let mut out = self.clone();
        for (s, lt) in out.log_target.iter_mut().zip(log_target) {
            *s = lt;
        }
        for (lt, &t) in out.log_target.iter_mut().zip(&self.terminal) {
            if !t {
                *lt = f64::NEG_INFINITY;
            }
        }
        out
    }

    /// Same structure with target `p~^beta`.
    pub fn with_reward_exponent(&self, beta: f64) -> Self {
        let scaled = self
            .log_target
            .iter()
            .zip(&self.terminal)
            .map(|(&lt, &t)| if t { beta * lt } else { f64::NEG_INFINITY })
            .collect();
        self.with_log_targets(scaled)
    }

    /// Every (parent, action, child) edge in parent-major order.
    pub fn edges(&self) -> impl Iterator<Item = Step> + '_ {
        self.state_ids().flat_map(move |s| {
            self.children[s.0].iter().map(move |&(action, to)| Step {
                from: s,
                action,
                to,
            })
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    OnPath,
    Done,
}

/// Enumerates the states reachable from the environment's initial state.
///
/// Indices come from reversing a DFS post-order in which children are visited
/// in action order, so the result is deterministic for a deterministic env.
pub fn enumerate<E: Environment>(env: &E, max_states: usize) -> Result<EnumeratedMdp, MdpError> {
    let mut ids: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut states: Vec<E::State> = Vec::new();
    let mut encodings: Vec<Vec<u8>> = Vec::new();
    let mut marks: Vec<Mark> = Vec::new();
    let mut kids: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut post_order: Vec<usize> = Vec::new();

    let init = env.initial_state();
    let init_enc = env.encode(&init);
    ids.insert(init_enc.clone(), 0);
    states.push(init);
    encodings.push(init_enc);
    marks.push(Mark::OnPath);
    kids.push(Vec::new());
    if max_states == 0 {
        return Err(MdpError::StateBudgetExceeded(max_states));
    }

    // (state, next action, action count)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    let first_actions = action_count(env, &states[0], &encodings[0])?;
    stack.push((0, 0, first_actions));

    while let Some(frame) = stack.last_mut() {
        let (s, next, count) = *frame;
        if next == count {
            stack.pop();
            marks[s] = Mark::Done;
            post_order.push(s);
            continue;
        }
        frame.1 += 1;
        let child = env.step(&states[s], next);
        let enc = env.encode(&child);
        let c = match ids.get(&enc) {
            Some(&c) => {
                if marks[c] == Mark::OnPath {
                    return Err(MdpError::CycleDetected(describe(&enc)));
                }
                c
            }
            None => {
                let c = states.len();
                if c >= max_states {
                    return Err(MdpError::StateBudgetExceeded(max_states));
                }
                let n = action_count(env, &child, &enc)?;
                ids.insert(enc.clone(), c);
                states.push(child);
                encodings.push(enc);
                marks.push(Mark::OnPath);
                kids.push(Vec::new());
                stack.push((c, 0, n));
                c
            }
        };
        kids[s].push((next, c));
    }

    let n = states.len();
    let mut order = vec![0usize; n];
    for (rank, &tmp) in post_order.iter().rev().enumerate() {
        order[tmp] = rank;
    }

    let mut children = vec![Vec::new(); n];
    let mut terminal = vec![false; n];
    let mut log_target = vec![f64::NEG_INFINITY; n];
    let mut out_states = vec![Vec::new(); n];
    for tmp in 0..n {
        let id = order[tmp];
        children[id] = kids[tmp]
            .iter()
            .map(|&(a, c)| (ActionId(a), StateId(order[c])))
            .collect();
        terminal[id] = env.is_terminal(&states[tmp]);
        if terminal[id] {
            log_target[id] = env.log_target(&states[tmp]);
        }
        out_states[id] = encodings[tmp].clone();
    }

    let mut parents = vec![Vec::new(); n];
    for tmp in 0..n {
        let id = order[tmp];
        for (p, a) in env.parents(&states[tmp]) {
            let penc = env.encode(&p);
            let mismatch = || MdpError::ParentMismatch {
                parent: describe(&penc),
                action: a,
                child: describe(&encodings[tmp]),
            };
            let ptmp = *ids.get(&penc).ok_or_else(mismatch)?;
            let pid = order[ptmp];
            match children[pid].get(a) {
                Some(&(_, c)) if c.0 == id => parents[id].push((StateId(pid), ActionId(a))),
                _ => return Err(mismatch()),
            }
        }
    }

    // every forward edge must be reported by the parent function exactly once
    let mdp = EnumeratedMdp::from_parts(
        out_states,
        children,
        parents,
        terminal,
        log_target,
        vec![StateId(order[0])],
    );
    for step in mdp.edges() {
        let listed = mdp.parents[step.to.0]
            .iter()
            .filter(|&&(p, a)| p == step.from && a == step.action)
            .count();
        if listed != 1 {
            return Err(MdpError::ParentMismatch {
                parent: describe(&mdp.states[step.from.0]),
                action: step.action.0,
                child: describe(&mdp.states[step.to.0]),
            });
        }
    }
    Ok(mdp)
}

fn action_count<E: Environment>(env: &E, state: &E::State, enc: &[u8]) -> Result<usize, MdpError> {
    if env.is_terminal(state) {
        return Ok(0);
    }
    match env.num_actions(state) {
        0 => Err(MdpError::DeadEnd(describe(enc))),
        n => Ok(n),
    }
}

fn describe(enc: &[u8]) -> String {
    match std::str::from_utf8(enc) {
        Ok(s) if s.chars().all(|c| !c.is_control()) => s.to_string(),
        _ => format!("{enc:02x?}"),
    }
}

/// Reverses every edge. States keep their encodings but are re-indexed in
/// reverse topological order; the original terminals become the initial-role
/// states and the original initial state becomes the only terminal, with
/// log-target 0. The actions at `s'` are its original parent pairs, in order.
pub fn invert(mdp: &EnumeratedMdp) -> EnumeratedMdp {
    let n = mdp.num_states();
    let flip = |s: StateId| StateId(n - 1 - s.0);

    let mut states = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    let mut parents = vec![Vec::new(); n];
    let mut terminal = vec![false; n];
    let mut log_target = vec![f64::NEG_INFINITY; n];

    for s in mdp.state_ids() {
        let inv = flip(s);
        states[inv.0] = mdp.states[s.0].clone();
        children[inv.0] = mdp.parents[s.0]
            .iter()
            .enumerate()
            .map(|(k, &(p, _))| (ActionId(k), flip(p)))
            .collect();
        parents[inv.0] = mdp.children[s.0]
            .iter()
            .enumerate()
            .map(|(k, &(_, c))| (flip(c), ActionId(mdp.parent_slot[s.0][k])))
            .collect();
        if mdp.is_initial(s) {
            terminal[inv.0] = true;
            log_target[inv.0] = 0.0;
        }
    }
    let mut initials: Vec<StateId> = mdp.terminals().map(flip).collect();
    initials.sort();
    EnumeratedMdp::from_parts(states, children, parents, terminal, log_target, initials)
}

/// The first invariant an [`EnumeratedMdp`] violates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Table lengths disagree.
    Shape(String),
    /// An edge goes from a higher index to a lower or equal one.
    Acyclicity {
        from: StateId,
        to: StateId,
    },
    /// Child and parent lists are not mutual inverses.
    ParentMismatch {
        from: StateId,
        action: ActionId,
        to: StateId,
    },
    /// Actions at a state are not `0..k` in order.
    ActionOrder(StateId),
    Unreachable(StateId),
    TerminalWithChildren(StateId),
    DeadEnd(StateId),
    NonFiniteTarget(StateId),
    InitialHasParents(StateId),
    NoInitialState,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(m) => write!(f, "shape: {m}"),
            Violation::Acyclicity { from, to } => write!(f, "acyclicity: edge {from} -> {to}"),
            Violation::ParentMismatch { from, action, to } => {
                write!(f, "parent mismatch: edge {from} --{action}--> {to}")
            }
            Violation::ActionOrder(s) => write!(f, "action order at state {s}"),
            Violation::Unreachable(s) => write!(f, "state {s} unreachable"),
            Violation::TerminalWithChildren(s) => write!(f, "terminal state {s} has children"),
            Violation::DeadEnd(s) => write!(f, "non-terminal state {s} has no children"),
            Violation::NonFiniteTarget(s) => {
                write!(f, "terminal state {s} has a non-finite target")
            }
            Violation::InitialHasParents(s) => write!(f, "initial state {s} has parents"),
            Violation::NoInitialState => write!(f, "no initial state"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks every structural invariant and reports the first violation.
pub fn validate(mdp: &EnumeratedMdp) -> ValidationReport {
    ValidationReport {
        violation: first_violation(mdp),
    }
}

fn first_violation(mdp: &EnumeratedMdp) -> Option<Violation> {
    let n = mdp.states.len();
    for (name, len) in [
        ("children", mdp.children.len()),
        ("parents", mdp.parents.len()),
        ("terminal", mdp.terminal.len()),
        ("log_target", mdp.log_target.len()),
    ] {
        if len != n {
            return Some(Violation::Shape(format!(
                "{name} has {len} rows for {n} states"
            )));
        }
    }
    if mdp.initials.is_empty() {
        return Some(Violation::NoInitialState);
    }
    if let Some(&s) = mdp.initials.iter().find(|s| s.0 >= n) {
        return Some(Violation::Shape(format!("initial state {s} out of range")));
    }

    for s in mdp.state_ids() {
        for (k, &(a, c)) in mdp.children[s.0].iter().enumerate() {
            if c.0 >= n {
                return Some(Violation::Shape(format!("edge {s} -> {c} out of range")));
            }
            if a.0 != k {
                return Some(Violation::ActionOrder(s));
            }
            if c <= s {
                return Some(Violation::Acyclicity { from: s, to: c });
            }
        }
    }

    let mut forward = 0usize;
    for step in mdp.edges() {
        forward += 1;
        let listed = mdp.parents[step.to.0]
            .iter()
            .filter(|&&(p, a)| p == step.from && a == step.action)
            .count();
        if listed != 1 {
            return Some(Violation::ParentMismatch {
                from: step.from,
                action: step.action,
                to: step.to,
            });
        }
    }
    for s in mdp.state_ids() {
        for &(p, a) in &mdp.parents[s.0] {
            let ok = mdp
                .children
                .get(p.0)
                .and_then(|ks| ks.get(a.0))
                .is_some_and(|&(_, c)| c == s);
            if !ok {
                return Some(Violation::ParentMismatch {
                    from: p,
                    action: a,
                    to: s,
                });
            }
        }
    }
    let backward: usize = mdp.parents.iter().map(Vec::len).sum();
    if backward != forward {
        return Some(Violation::Shape(format!(
            "{forward} forward edges but {backward} parent entries"
        )));
    }

    for s in mdp.state_ids() {
        if mdp.terminal[s.0] {
            if !mdp.children[s.0].is_empty() {
                return Some(Violation::TerminalWithChildren(s));
            }
            if !mdp.log_target[s.0].is_finite() {
                return Some(Violation::NonFiniteTarget(s));
            }
        } else if mdp.children[s.0].is_empty() {
            return Some(Violation::DeadEnd(s));
        }
        if mdp.is_initial(s) && !mdp.parents[s.0].is_empty() {
            return Some(Violation::InitialHasParents(s));
        }
    }

    let mut reached = vec![false; n];
    for &s in &mdp.initials {
        reached[s.0] = true;
    }
    // topological order lets one forward sweep settle reachability
    for s in mdp.state_ids() {
        if reached[s.0] {
            for &(_, c) in &mdp.children[s.0] {
                reached[c.0] = true;
            }
        }
    }
    if let Some(s) = reached.iter().position(|&r| !r) {
        return Some(Violation::Unreachable(StateId(s)));
    }
    None
}

/// Enumerates every trajectory from every initial state by depth-first
/// search, calling `visit` on each complete one. Fails once more than
/// `budget` trajectories have been found.
pub fn for_each_trajectory<F>(
    mdp: &EnumeratedMdp,
    budget: usize,
    mut visit: F,
) -> Result<usize, MdpError>
where
    F: FnMut(&Trajectory),
{
    let mut count = 0usize;
    for &start in mdp.initials() {
        let mut traj = Trajectory::new(start);
        // stack of next-child cursors, one per state on the current path
        let mut cursors: Vec<usize> = vec![0];
        while let Some(cursor) = cursors.last_mut() {
            let at = traj.end();
            let kids = mdp.children(at);
            if kids.is_empty() {
                count += 1;
                if count > budget {
                    return Err(MdpError::TrajectoryBudgetExceeded(budget));
                }
                visit(&traj);
            }
            if *cursor < kids.len() {
                let (a, c) = kids[*cursor];
                *cursor += 1;
                traj.push(a, c);
                cursors.push(0);
            } else {
                cursors.pop();
                traj.steps.pop();
            }
        }
    }
    Ok(count)
}

/// Collects every trajectory; see [`for_each_trajectory`].
pub fn enumerate_trajectories(
    mdp: &EnumeratedMdp,
    budget: usize,
) -> Result<Vec<Trajectory>, MdpError> {
    let mut out = Vec::new();
    for_each_trajectory(mdp, budget, |t| out.push(t.clone()))?;
    Ok(out)
}
