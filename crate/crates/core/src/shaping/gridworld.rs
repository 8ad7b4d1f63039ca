//! Small deterministic gridworld with value iteration, used to check that
//! potential-based shaping leaves greedy policies unchanged when the state
//! is fully observed.

/// Moves: up, down, left, right.
pub const ACTIONS: [(i64, i64); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

#[derive(Clone, Debug)]
pub struct GridWorld {
    pub size: usize,
    /// Absorbing terminal cell.
    pub goal: usize,
    /// Cells with an extra entry penalty.
    pub hazards: Vec<usize>,
    pub step_reward: f64,
    pub hazard_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
}

impl GridWorld {
    pub fn new(size: usize, gamma: f64) -> Self {
        Self {
            size,
            goal: size * size - 1,
            hazards: Vec::new(),
            step_reward: -1.0,
            hazard_reward: -5.0,
            goal_reward: 10.0,
            gamma,
        }
    }

    pub fn n_states(&self) -> usize {
        self.size * self.size
    }

    /// Successor of `s` under action `a`; walls keep the agent in place.
    pub fn next(&self, s: usize, a: usize) -> usize {
        let n = self.size as i64;
        let (x, y) = ((s % self.size) as i64, (s / self.size) as i64);
        let (dx, dy) = ACTIONS[a];
        let (nx, ny) = ((x + dx).clamp(0, n - 1), (y + dy).clamp(0, n - 1));
        (ny * n + nx) as usize
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        let s2 = self.next(s, a);
        let mut r = self.step_reward;
        if self.hazards.contains(&s2) {
            r += self.hazard_reward;
        }
        if s2 == self.goal {
            r += self.goal_reward;
        }
        r
    }

    /// Action values from value iteration. With `potential`, every reward is
    /// augmented by `gamma * phi(s') - phi(s)`, where the terminal state's
    /// potential is taken as zero.
    pub fn q_values(&self, potential: Option<&[f64]>, tol: f64) -> Vec<[f64; 4]> {
        let n = self.n_states();
        let phi = |s: usize| match potential {
            Some(p) if s != self.goal => p[s],
            _ => 0.0,
        };
        let mut v = vec![0.0; n];
        let mut q = vec![[0.0; 4]; n];
        loop {
            let mut delta: f64 = 0.0;
            for s in (0..n).filter(|&s| s != self.goal) {
                for a in 0..ACTIONS.len() {
                    let s2 = self.next(s, a);
                    let shaped = self.reward(s, a) + self.gamma * phi(s2) - phi(s);
                    q[s][a] = shaped + self.gamma * v[s2];
                }
                let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < tol {
                return q;
            }
        }
    }
}

/// For each state, the actions whose value is within `tol` of the best.
pub fn greedy_sets(q: &[[f64; 4]], tol: f64) -> Vec<Vec<usize>> {
    q.iter()
        .map(|row| {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
        })
        .collect()
}
