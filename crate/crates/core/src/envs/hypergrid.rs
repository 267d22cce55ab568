use crate::mdp::Environment;

/// Reward landscape of the hypergrid benchmark at lattice point `x` on a grid
/// of side `side`: `0.1 + 0.5 * prod 1[0.25 < |s_i - 0.5|] + 2 * prod 1[0.3 < |s_i - 0.5| < 0.4]`
/// with `s_i = x_i / (side - 1)`.
pub fn hypergrid_target(x: &[usize], side: usize) -> f64 {
    assert!(side >= 2, "hypergrid side must be at least 2");
    let span = (side - 1) as f64;
    let dist = |xi: &usize| (*xi as f64 / span - 0.5).abs();
    let outer = x.iter().map(dist).all(|d| 0.25 < d);
    let ring = x.iter().map(dist).all(|d| 0.3 < d && d < 0.4);
    0.1 + if outer { 0.5 } else { 0.0 } + if ring { 2.0 } else { 0.0 }
}

/// `d`-dimensional grid of side `H`. From a lattice point the agent may
/// increment any coordinate below `H - 1` or stop; stopping moves to a
/// distinct terminal copy of the point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypergridEnv {
    pub dims: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub coords: Vec<usize>,
    pub done: bool,
}

impl HypergridEnv {
    pub fn new(dims: usize, side: usize) -> Self {
        assert!(
            dims >= 1 && side >= 2,
            "hypergrid needs dims >= 1 and side >= 2"
        );
        Self { dims, side }
    }

    /// Coordinates that can still be incremented, in coordinate order.
    fn open_axes<'a>(&'a self, coords: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        coords
            .iter()
            .enumerate()
            .filter(|&(_, &x)| x + 1 < self.side)
            .map(|(i, _)| i)
    }

    /// Decodes a state encoding produced by this env.
    pub fn decode(&self, enc: &[u8]) -> GridState {
        let coords = enc[..self.dims]
            .iter()
            .map(|&b| b as usize)
            .collect::<Vec<_>>();
        GridState {
            coords,
            done: enc[self.dims] == 1,
        }
    }
}

impl Environment for HypergridEnv {
    type State = GridState;

    fn initial_state(&self) -> GridState {
        GridState {
            coords: vec![0; self.dims],
            done: false,
        }
    }

    fn num_actions(&self, state: &GridState) -> usize {
        if state.done {
            0
        } else {
            self.open_axes(&state.coords).count() + 1
        }
    }

    fn step(&self, state: &GridState, action: usize) -> GridState {
        match self.open_axes(&state.coords).nth(action) {
            Some(axis) => {
                let mut coords = state.coords.clone();
                coords[axis] += 1;
                GridState {
                    coords,
                    done: false,
                }
            }
            None => GridState {
                coords: state.coords.clone(),
                done: true,
            },
        }
    }

    fn is_terminal(&self, state: &GridState) -> bool {
        state.done
    }

    fn log_target(&self, state: &GridState) -> f64 {
        hypergrid_target(&state.coords, self.side).ln()
    }

    fn parents(&self, state: &GridState) -> Vec<(GridState, usize)> {
        if state.done {
            let lattice = GridState {
                coords: state.coords.clone(),
                done: false,
            };
            let stop = self.open_axes(&lattice.coords).count();
            return vec![(lattice, stop)];
        }
        (0..self.dims)
            .filter(|&i| state.coords[i] > 0)
            .map(|i| {
                let mut coords = state.coords.clone();
                coords[i] -= 1;
                let action = self
                    .open_axes(&coords)
                    .position(|a| a == i)
                    .expect("axis open");
                (
                    GridState {
                        coords,
                        done: false,
                    },
                    action,
                )
            })
            .collect()
    }

    fn encode(&self, state: &GridState) -> Vec<u8> {
        assert!(self.side <= 256, "encoding supports side <= 256");
        let mut enc: Vec<u8> = state.coords.iter().map(|&x| x as u8).collect();
        enc.push(state.done as u8);
        enc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_examples() {
        assert!((hypergrid_target(&[1, 1], 3) - 0.1).abs() < 1e-15);
        assert!((hypergrid_target(&[0, 2, 0], 3) - 0.6).abs() < 1e-15);
        // 8/63: |s - 0.5| = 0.373 sits inside both bands
        assert!((hypergrid_target(&[8, 55], 64) - 2.6).abs() < 1e-15);
        // |s - 0.5| = 0.25 exactly fails the strict outer band
        assert!((hypergrid_target(&[1, 1], 5) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn stop_is_last_action() {
        let env = HypergridEnv::new(2, 3);
        let s = GridState {
            coords: vec![2, 1],
            done: false,
        };
        assert_eq!(env.num_actions(&s), 2);
        assert_eq!(env.step(&s, 0).coords, vec![2, 2]);
        assert!(env.step(&s, 1).done);
    }
}
