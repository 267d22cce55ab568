use crate::mdp::Environment;

/// One entry of a partially specified bit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Unset,
    Zero,
    One,
}

/// Vectors over `{*, 0, 1}` of a fixed length; each action fills one `*`.
/// Action `2i + b` sets the `i`-th unset slot (in position order) to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitVectorEnv {
    pub length: usize,
}

/// `k!` for a state with `k` set entries.
pub fn bitvec_n(state: &[Slot]) -> u64 {
    let k = state.iter().filter(|&&s| s != Slot::Unset).count() as u64;
    (1..=k).product()
}

impl BitVectorEnv {
    pub fn new(length: usize) -> Self {
        Self { length }
    }

    fn unset_positions(state: &[Slot]) -> impl Iterator<Item = usize> + '_ {
        state
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == Slot::Unset)
            .map(|(i, _)| i)
    }
}

impl Environment for BitVectorEnv {
    type State = Vec<Slot>;

    fn initial_state(&self) -> Vec<Slot> {
        vec![Slot::Unset; self.length]
    }

    fn num_actions(&self, state: &Vec<Slot>) -> usize {
        2 * Self::unset_positions(state).count()
    }

    fn step(&self, state: &Vec<Slot>, action: usize) -> Vec<Slot> {
        let pos = Self::unset_positions(state)
            .nth(action / 2)
            .expect("action in range");
        let mut next = state.clone();
        next[pos] = if action.is_multiple_of(2) {
            Slot::Zero
        } else {
            Slot::One
        };
        next
    }

    fn is_terminal(&self, state: &Vec<Slot>) -> bool {
        !state.contains(&Slot::Unset)
    }

    /// `p~ = 1 + (number of ones)`.
    fn log_target(&self, state: &Vec<Slot>) -> f64 {
        (1.0 + state.iter().filter(|&&s| s == Slot::One).count() as f64).ln()
    }

    fn parents(&self, state: &Vec<Slot>) -> Vec<(Vec<Slot>, usize)> {
        (0..state.len())
            .filter(|&i| state[i] != Slot::Unset)
            .map(|i| {
                let mut parent = state.clone();
                parent[i] = Slot::Unset;
                let rank = Self::unset_positions(&parent)
                    .position(|p| p == i)
                    .expect("slot just cleared");
                let bit = usize::from(state[i] == Slot::One);
                (parent, 2 * rank + bit)
            })
            .collect()
    }

    fn encode(&self, state: &Vec<Slot>) -> Vec<u8> {
        state
            .iter()
            .map(|s| match s {
                Slot::Unset => b'*',
                Slot::Zero => b'0',
                Slot::One => b'1',
            })
            .collect()
    }
}
