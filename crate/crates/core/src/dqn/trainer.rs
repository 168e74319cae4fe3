use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{cast, QNetwork, Scalar};
use super::replay::{ReplayBuffer, Transition};
use crate::rl_env::{Action, AgentState, LocalizationEnv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub max_episodes: usize,
    pub hidden_layers: Vec<usize>,
    /// Length of the moving average and of the span it must stay flat.
    pub plateau_window: usize,
    /// Relative width of the band counted as flat.
    pub plateau_tolerance: f64,
    /// Rescale the gradient when its global norm exceeds this.
    pub max_grad_norm: Option<f64>,
    /// Multiplier applied to rewards before they enter replay. Scores are
    /// still reported in environment units.
    pub reward_scale: f64,
    /// Subtract the running mean reward before storing a transition.
    pub center_rewards: bool,
    /// Store the end of the fixed horizon as a terminal transition. The
    /// state carries no step counter, so by default the last transition
    /// bootstraps like any other.
    pub horizon_is_terminal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_decay: 0.99,
            epsilon_min: 0.01,
            batch_size: 64,
            replay_capacity: 1_000_000,
            max_episodes: 300,
            hidden_layers: vec![128, 128, 128],
            plateau_window: 20,
            plateau_tolerance: 0.01,
            max_grad_norm: Some(1.0),
            reward_scale: 0.01,
            center_rewards: true,
            horizon_is_terminal: false,
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(3)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(Action::COUNT))
            .collect()
    }

    /// Exploration rate in effect during episode `episode` (0-based).
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(episode as i32)).max(self.epsilon_min)
    }
}

fn features<F: Scalar>(obs: [f64; 3]) -> [F; 3] {
    obs.map(cast)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice. A uniform draw below `epsilon` picks a uniformly
/// random action, otherwise the greedy action.
pub fn select_action<F: Scalar, R: Rng>(
    net: &QNetwork<F>,
    state: &[F; 3],
    epsilon: f64,
    rng: &mut R,
) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        greedy_action(net, state)
    }
}

pub fn greedy_action<F: Scalar>(net: &QNetwork<F>, state: &[F; 3]) -> Action {
    let q = net.q_values(state).expect("network input width is 3");
    Action::ALL[argmax(&q)]
}

/// `r` for a terminal transition, `r + gamma * max_a Q(s', a)` otherwise.
pub fn td_target<F: Scalar>(net: &QNetwork<F>, t: &Transition<F>, discount: F) -> F {
    if t.done {
        return t.reward;
    }
    let q = net.q_values(&t.next_state).expect("network input width is 3");
    t.reward + discount * q[argmax(&q)]
}

/// One minibatch update. Returns the loss before the update, or `None` when
/// the buffer holds less than a batch.
pub fn train_step<F: Scalar, R: Rng>(
    net: &mut QNetwork<F>,
    buffer: &ReplayBuffer<F>,
    config: &TrainConfig,
    rng: &mut R,
) -> Option<F> {
    let batch = buffer.sample(config.batch_size, rng)?;
    let n = batch.len();
    let discount = cast::<F>(config.discount);

    let next = Array2::from_shape_fn((n, 3), |(i, j)| batch[i].next_state[j]);
    let next_q = net.forward(next.view()).expect("network input width is 3");
    let targets: Vec<F> = batch
        .iter()
        .zip(next_q.rows())
        .map(|(t, q)| {
            if t.done {
                t.reward
            } else {
                let q = q.to_vec();
                t.reward + discount * q[argmax(&q)]
            }
        })
        .collect();

    let states = Array2::from_shape_fn((n, 3), |(i, j)| batch[i].state[j]);
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, mut grads) = net
        .selected_action_loss(states.view(), &actions, &targets)
        .expect("network input width is 3");
    if let Some(limit) = config.max_grad_norm {
        let norm = grads.norm();
        let limit = cast::<F>(limit);
        if norm > limit {
            grads.scale(limit / norm);
        }
    }
    net.apply(&grads, cast(config.learning_rate));
    Some(loss)
}

/// True once the `window`-episode moving average of the score has stayed
/// within a band of `tolerance` (relative to its latest value) for the last
/// `window` episodes. A single comparison of two windows is not enough: the
/// exploration noise makes it pass by chance long before learning ends.
pub fn has_plateaued(scores: &[f64], window: usize, tolerance: f64) -> bool {
    if window == 0 || scores.len() < 2 * window - 1 {
        return false;
    }
    let w = window as f64;
    let n = scores.len();
    let mut sum: f64 = scores[n + 1 - 2 * window..n + 1 - window].iter().sum();
    let (mut lo, mut hi) = (sum / w, sum / w);
    for end in n + 1 - window..n {
        sum += scores[end] - scores[end - window];
        lo = lo.min(sum / w);
        hi = hi.max(sum / w);
    }
    let latest = sum / w;
    hi - lo <= tolerance * latest.abs().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub network: QNetwork<F>,
    /// Undiscounted return of each episode.
    pub scores: Vec<f64>,
    /// Episodes run when the score plateaued, if it did.
    pub converged_at: Option<usize>,
    pub final_epsilon: f64,
}

impl<F> TrainOutcome<F> {
    pub fn episodes(&self) -> usize {
        self.scores.len()
    }
}

/// Trains a fresh agent on `env` with experience replay.
pub fn train_agent<F: Scalar, R: Rng>(
    env: &LocalizationEnv,
    config: &TrainConfig,
    rng: &mut R,
) -> TrainOutcome<F> {
    let mut net = QNetwork::<F>::new(&config.layer_sizes(), rng);
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut scores = Vec::with_capacity(config.max_episodes);
    let mut converged_at = None;
    let mut epsilon = config.epsilon_start;
    let mut reward_mean = 0.0;
    let mut seen = 0usize;

    for episode in 0..config.max_episodes {
        let mut state = env.reset();
        let mut score = 0.0;
        loop {
            let obs = features::<F>(env.observe(&state));
            let action = select_action(&net, &obs, epsilon, rng);
            let out = env.step(&state, action);
            let mut reward = out.reward * config.reward_scale;
            if config.center_rewards {
                seen += 1;
                reward_mean += (reward - reward_mean) / seen as f64;
                reward -= reward_mean;
            }
            buffer.push(Transition {
                state: obs,
                action: action.index(),
                reward: cast(reward),
                next_state: features(env.observe(&out.state)),
                done: out.done && config.horizon_is_terminal,
            });
            train_step(&mut net, &buffer, config, rng);
            score += out.reward;
            state = out.state;
            if out.done {
                break;
            }
        }
        scores.push(score);
        epsilon = config.epsilon_at(episode + 1);
        if has_plateaued(&scores, config.plateau_window, config.plateau_tolerance) {
            converged_at = Some(episode + 1);
            break;
        }
    }

    TrainOutcome {
        network: net,
        scores,
        converged_at,
        final_epsilon: epsilon,
    }
}

/// One greedy episode from the base. Returns every visited state with the
/// reward received on arriving there.
pub fn greedy_rollout<F: Scalar>(
    net: &QNetwork<F>,
    env: &LocalizationEnv,
) -> Vec<(AgentState, f64)> {
    let mut state = env.reset();
    let mut path = Vec::with_capacity(env.params().episode_length);
    loop {
        let action = greedy_action(net, &features::<F>(env.observe(&state)));
        let out = env.step(&state, action);
        path.push((out.state, out.reward));
        state = out.state;
        if out.done {
            return path;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::network::Dense;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon_at(0), 1.0);
        assert_relative_eq!(c.epsilon_at(100), 0.99f64.powi(100), max_relative = 1e-12);
        assert_relative_eq!(c.epsilon_at(100), 0.366, epsilon = 1e-3);
        assert_eq!(c.epsilon_at(1000), 0.01);
    }

    #[test]
    fn td_target_example() {
        // Q(s') = (1, 2, 0, 0, 0): 1 + 0.99 * 2 = 2.98.
        let head = Dense {
            weights: Array2::zeros((3, 5)),
            bias: array![1.0, 2.0, 0.0, 0.0, 0.0],
        };
        let net = QNetwork::<f64>::from_layers(vec![head]).unwrap();
        let mut t = Transition {
            state: [0.0; 3],
            action: 0,
            reward: 1.0,
            next_state: [0.5, 0.5, 1.0],
            done: false,
        };
        assert_relative_eq!(td_target(&net, &t, 0.99), 2.98, epsilon = 1e-12);
        t.done = true;
        assert_eq!(td_target(&net, &t, 0.99), 1.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        let net = QNetwork::<f64>::zeros(&[3, 4, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_action(&net, &[0.1, 0.2, 1.0], 0.0, &mut rng), Action::Left);
        }
    }

    #[test]
    fn plateau_rule() {
        assert!(!has_plateaued(&[1.0; 38], 20, 0.01));
        assert!(has_plateaued(&[1.0; 39], 20, 0.01));
        let mut step: Vec<f64> = vec![1.0; 20];
        step.extend(vec![1.1; 19]);
        assert!(!has_plateaued(&step, 20, 0.01));
        // Moving averages 1.0 then 1.005: inside a 1% band.
        let mut small: Vec<f64> = vec![1.0; 20];
        small.extend(vec![1.1; 1]);
        small.extend(vec![1.0; 18]);
        assert!(has_plateaued(&small, 20, 0.01));
        // Alternating noise averages out once the window is even.
        let noisy: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 0.5 } else { 1.5 }).collect();
        assert!(has_plateaued(&noisy, 20, 0.01));
    }
}
