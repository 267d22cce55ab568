use crate::mdp::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordsMode {
    /// Letters may only be appended on the right.
    AppendRight,
    /// Letters may be prepended or appended.
    AppendEitherSide,
}

/// Builds words of length `length` over an alphabet of `alphabet` letters.
///
/// In either-side mode the empty word has one action per letter; longer words
/// have `2 * alphabet` actions, prepends first. Prepending and appending the
/// same letter can reach the same word, giving parallel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WordsEnv {
    pub alphabet: usize,
    pub length: usize,
    pub mode: WordsMode,
}

/// Closed-form number of trajectories reaching any word of length `n`.
pub fn words_n(n: usize, mode: WordsMode) -> u64 {
    assert!(n >= 1);
    match mode {
        WordsMode::AppendRight => 1,
        WordsMode::AppendEitherSide => 1u64 << (n - 1),
    }
}

impl WordsEnv {
    pub fn new(alphabet: usize, length: usize, mode: WordsMode) -> Self {
        assert!((1..=255).contains(&alphabet) && length >= 1);
        Self {
            alphabet,
            length,
            mode,
        }
    }
}

impl Environment for WordsEnv {
    type State = Vec<u8>;

    fn initial_state(&self) -> Vec<u8> {
        Vec::new()
    }

    fn num_actions(&self, word: &Vec<u8>) -> usize {
        if word.len() >= self.length {
            0
        } else if word.is_empty() || self.mode == WordsMode::AppendRight {
            self.alphabet
        } else {
            2 * self.alphabet
        }
    }

    fn step(&self, word: &Vec<u8>, action: usize) -> Vec<u8> {
        let mut next = word.clone();
        if word.is_empty() || self.mode == WordsMode::AppendRight {
            next.push(action as u8);
        } else if action < self.alphabet {
            next.insert(0, action as u8);
        } else {
            next.push((action - self.alphabet) as u8);
        }
        next
    }

    fn is_terminal(&self, word: &Vec<u8>) -> bool {
        word.len() == self.length
    }

    /// Favors words with many occurrences of letter 0.
    fn log_target(&self, word: &Vec<u8>) -> f64 {
        (1.0 + word.iter().filter(|&&c| c == 0).count() as f64).ln()
    }

    fn parents(&self, word: &Vec<u8>) -> Vec<(Vec<u8>, usize)> {
        match word.len() {
            0 => vec![],
            1 => vec![(Vec::new(), word[0] as usize)],
            m => {
                let right = (word[..m - 1].to_vec(), word[m - 1] as usize);
                match self.mode {
                    WordsMode::AppendRight => vec![right],
                    WordsMode::AppendEitherSide => {
                        let left = (word[1..].to_vec(), word[0] as usize);
                        let right = (right.0, right.1 + self.alphabet);
                        vec![left, right]
                    }
                }
            }
        }
    }

    fn encode(&self, word: &Vec<u8>) -> Vec<u8> {
        word.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prepend_and_append() {
        let env = WordsEnv::new(3, 4, WordsMode::AppendEitherSide);
        assert_eq!(env.num_actions(&vec![]), 3);
        assert_eq!(env.num_actions(&vec![1]), 6);
        assert_eq!(env.step(&vec![1], 2), vec![2, 1]);
        assert_eq!(env.step(&vec![1], 5), vec![1, 2]);
        // prepending or appending the same letter to a palindrome collide
        assert_eq!(env.step(&vec![0], 0), env.step(&vec![0], 3));
    }

    #[test]
    fn closed_form_counts() {
        assert_eq!(words_n(1, WordsMode::AppendEitherSide), 1);
        assert_eq!(words_n(6, WordsMode::AppendEitherSide), 32);
        assert_eq!(words_n(6, WordsMode::AppendRight), 1);
    }
}
