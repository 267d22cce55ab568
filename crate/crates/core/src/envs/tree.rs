use crate::mdp::Environment;

/// An unrooted tree whose nodes carry small integer labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledTree {
    pub labels: Vec<u8>,
    pub edges: Vec<(usize, usize)>,
}

impl LabeledTree {
    pub fn new(labels: Vec<u8>, edges: Vec<(usize, usize)>) -> Self {
        assert!(
            labels.is_empty() || edges.len() + 1 == labels.len(),
            "a tree on {} nodes has {} edges",
            labels.len(),
            labels.len().saturating_sub(1)
        );
        Self { labels, edges }
    }

    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Nodes of degree at most one.
    pub fn leaves(&self) -> Vec<usize> {
        self.adjacency()
            .iter()
            .enumerate()
            .filter(|(_, ns)| ns.len() <= 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// One or two centers, found by repeatedly stripping all current leaves.
    fn centers(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut remaining = self.len();
        let mut layer: Vec<usize> = (0..self.len()).filter(|&i| degree[i] <= 1).collect();
        while remaining > 2 {
            remaining -= layer.len();
            let mut next = Vec::new();
            for &leaf in &layer {
                for &nb in &adj[leaf] {
                    if degree[nb] > 1 {
                        degree[nb] -= 1;
                        if degree[nb] == 1 {
                            next.push(nb);
                        }
                    }
                }
                degree[leaf] = 0;
            }
            layer = next;
        }
        layer.sort_unstable();
        layer
    }

    fn rooted_code(&self, adj: &[Vec<usize>], node: usize, from: Option<usize>) -> String {
        let mut kids: Vec<String> = adj[node]
            .iter()
            .filter(|&&c| Some(c) != from)
            .map(|&c| self.rooted_code(adj, c, Some(node)))
            .collect();
        kids.sort();
        format!("({}{})", self.labels[node], kids.concat())
    }

    /// Canonical code shared by exactly the isomorphic label-preserving trees:
    /// the smallest rooted code over the tree's centers.
    pub fn canonical_code(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let adj = self.adjacency();
        self.centers()
            .into_iter()
            .map(|c| self.rooted_code(&adj, c, None))
            .min()
            .expect("non-empty tree has a center")
    }

    /// Rebuilds the tree described by a rooted code; nodes come out in preorder.
    pub fn from_code(code: &str) -> Self {
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        let bytes = code.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'(' => {
                    let start = i + 1;
                    let mut end = start;
                    while bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                    let label: u8 = code[start..end].parse().expect("label digits");
                    let id = labels.len();
                    labels.push(label);
                    if let Some(&parent) = stack.last() {
                        edges.push((parent, id));
                    }
                    stack.push(id);
                    i = end;
                }
                b')' => {
                    stack.pop();
                    i += 1;
                }
                other => panic!("unexpected byte {other} in tree code"),
            }
        }
        Self { labels, edges }
    }

    /// Canonical form: same tree, nodes renumbered by the canonical code.
    pub fn canonicalize(&self) -> Self {
        Self::from_code(&self.canonical_code())
    }

    fn with_leaf(&self, at: Option<usize>, label: u8) -> Self {
        let mut out = self.clone();
        out.labels.push(label);
        if let Some(a) = at {
            out.edges.push((a, out.labels.len() - 1));
        }
        out
    }

    fn without_node(&self, v: usize) -> Self {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != v)
            .map(|(_, &l)| l)
            .collect();
        let shift = |i: usize| if i > v { i - 1 } else { i };
        let edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| a != v && b != v)
            .map(|&(a, b)| (shift(a), shift(b)))
            .collect();
        Self { labels, edges }
    }
}

/// Number of orders in which the nodes of `tree` can be added one at a time so
/// that every added node attaches to an existing one, treating nodes as
/// distinct: the sum over roots `r` of `W_r[r]`, where
/// `W_r[s] = (D_r[s]-1)! / prod_c D_r[c]! * prod_c W_r[c]` and `D_r` is the
/// subtree size.
pub fn tree_n(tree: &LabeledTree) -> u128 {
    assert!(!tree.is_empty(), "tree_n needs at least one node");
    let adj = tree.adjacency();
    (0..tree.len())
        .map(|r| rooted_orders(&adj, r, None).1)
        .sum()
}

// (subtree size, number of orders)
fn rooted_orders(adj: &[Vec<usize>], node: usize, from: Option<usize>) -> (u128, u128) {
    let mut size = 1u128;
    let mut ways = 1u128;
    for &c in adj[node].iter().filter(|&&c| Some(c) != from) {
        let (cs, cw) = rooted_orders(adj, c, Some(node));
        // interleave the child's block into the (size - 1) slots placed so far
        ways *= binomial(size - 1 + cs, cs) * cw;
        size += cs;
    }
    (size, ways)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Grows labeled trees one node at a time up to `max_nodes` nodes; trees with
/// `max_nodes` nodes are terminal. States are canonicalized, so isomorphic
/// trees are a single state, and actions from a state that produce
/// isomorphic trees are merged into one. With `distinct_labels` a label may
/// occur at most once per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBuildEnv {
    pub labels: u8,
    pub max_nodes: usize,
    pub distinct_labels: bool,
}

impl TreeBuildEnv {
    pub fn new(labels: u8, max_nodes: usize, distinct_labels: bool) -> Self {
        assert!(labels >= 1 && max_nodes >= 1);
        assert!(!distinct_labels || max_nodes <= labels as usize);
        Self {
            labels,
            max_nodes,
            distinct_labels,
        }
    }

    /// Distinct canonical successors in action order.
    pub fn successors(&self, tree: &LabeledTree) -> Vec<LabeledTree> {
        if tree.len() >= self.max_nodes {
            return Vec::new();
        }
        let anchors: Vec<Option<usize>> = if tree.is_empty() {
            vec![None]
        } else {
            (0..tree.len()).map(Some).collect()
        };
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for at in anchors {
            for label in 0..self.labels {
                if self.distinct_labels && tree.labels.contains(&label) {
                    continue;
                }
                let next = tree.with_leaf(at, label).canonicalize();
                if seen.insert(next.canonical_code()) {
                    out.push(next);
                }
            }
        }
        out
    }
}

impl Environment for TreeBuildEnv {
    type State = LabeledTree;

    fn initial_state(&self) -> LabeledTree {
        LabeledTree::empty()
    }

    fn num_actions(&self, state: &LabeledTree) -> usize {
        self.successors(state).len()
    }

    fn step(&self, state: &LabeledTree, action: usize) -> LabeledTree {
        self.successors(state).swap_remove(action)
    }

    fn is_terminal(&self, state: &LabeledTree) -> bool {
        state.len() == self.max_nodes
    }

    /// `p~ = number of leaves`.
    fn log_target(&self, state: &LabeledTree) -> f64 {
        (state.leaves().len() as f64).ln()
    }

    fn parents(&self, state: &LabeledTree) -> Vec<(LabeledTree, usize)> {
        let code = state.canonical_code();
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for leaf in state.leaves() {
            let parent = state.without_node(leaf).canonicalize();
            if !seen.insert(parent.canonical_code()) {
                continue;
            }
            let action = self
                .successors(&parent)
                .iter()
                .position(|t| t.canonical_code() == code)
                .expect("removing a leaf is undone by re-attaching it");
            out.push((parent, action));
        }
        out
    }

    fn encode(&self, state: &LabeledTree) -> Vec<u8> {
        state.canonical_code().into_bytes()
    }
}
