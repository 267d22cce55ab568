use crate::mdp::Environment;

/// Four-state DAG with edges `s0->s1`, `s0->s2`, `s2->s1`, `s2->sT`, `s1->sT`.
/// Three distinct trajectories reach the single terminal `sT`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleDagEnv {
    /// Unnormalized target of `sT`.
    pub target: f64,
}

impl Default for SimpleDagEnv {
    fn default() -> Self {
        Self { target: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimpleState {
    S0,
    S1,
    S2,
    ST,
}

impl SimpleDagEnv {
    pub fn new(target: f64) -> Self {
        Self { target }
    }
}

impl Environment for SimpleDagEnv {
    type State = SimpleState;

    fn initial_state(&self) -> SimpleState {
        SimpleState::S0
    }

    fn num_actions(&self, state: &SimpleState) -> usize {
        match state {
            SimpleState::S0 | SimpleState::S2 => 2,
            SimpleState::S1 => 1,
            SimpleState::ST => 0,
        }
    }

    fn step(&self, state: &SimpleState, action: usize) -> SimpleState {
        use SimpleState::*;
        match (state, action) {
            (S0, 0) => S1,
            (S0, 1) => S2,
            (S2, 0) => S1,
            (S2, 1) => ST,
            (S1, 0) => ST,
            _ => panic!("illegal action {action} at {state:?}"),
        }
    }

    fn is_terminal(&self, state: &SimpleState) -> bool {
        *state == SimpleState::ST
    }

    fn log_target(&self, _state: &SimpleState) -> f64 {
        self.target.ln()
    }

    fn parents(&self, state: &SimpleState) -> Vec<(SimpleState, usize)> {
        use SimpleState::*;
        match state {
            S0 => vec![],
            S1 => vec![(S0, 0), (S2, 0)],
            S2 => vec![(S0, 1)],
            ST => vec![(S1, 0), (S2, 1)],
        }
    }

    fn encode(&self, state: &SimpleState) -> Vec<u8> {
        let name = match state {
            SimpleState::S0 => "s0",
            SimpleState::S1 => "s1",
            SimpleState::S2 => "s2",
            SimpleState::ST => "sT",
        };
        name.as_bytes().to_vec()
    }
}
