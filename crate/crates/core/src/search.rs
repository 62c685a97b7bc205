//! Gate-count minimization as a sequential decision process, solved with
//! Monte-Carlo Tree Search over the masked decoder.
//!
//! The state is the trajectory so far, actions are the valid next tokens and
//! the reward is `-1` per gate token plus `+1` per gate merged into an
//! existing isomorphic one, so an episode's return is minus the final AND
//! count. The policy supplies PUCT priors and doubles as the rollout policy.
//! The final action at each decision is the child with the best return ever
//! observed through it, not the most visited one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aig::Aig;
use crate::decoder::{
    finish, greedy_token, masked_probs, sample_token, DecodeError, DecodeMode, DecodeState, EquivSpec, Policy,
};
use crate::trajectory::{Token, TokenKind, Trajectory};

/// Reward of a single decoding step.
pub fn step_reward(kind: TokenKind, merges: usize) -> i64 {
    let base = match kind {
        TokenKind::And { .. } => -1,
        _ => 0,
    };
    base + merges as i64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Number of leading decisions made by tree search; greedy afterwards.
    pub steps: usize,
    /// Simulations per searched decision.
    pub rollouts: usize,
    pub c_uct: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            steps: 1,
            rollouts: 5,
            c_uct: 1.4,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn new(steps: usize, rollouts: usize, seed: u64) -> Self {
        SearchConfig {
            steps,
            rollouts: rollouts.max(1),
            seed,
            ..Default::default()
        }
    }
}

/// A complete token stream from the empty state and its total reward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    pub tokens: Vec<Token>,
    pub reward: i64,
}

#[derive(Clone, Debug)]
pub struct ChildStats {
    pub token: Token,
    pub visits: u32,
    pub mean_return: f64,
    pub best_return: Option<i64>,
    pub prior: f64,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub token: Token,
    pub children: Vec<ChildStats>,
    /// Best complete episode seen during this search.
    pub best_episode: Option<Episode>,
    pub completed_rollouts: usize,
    pub failed_rollouts: usize,
}

struct McNode {
    state: DecodeState,
    children: Vec<(Token, usize)>,
    /// Masked, renormalized policy probabilities over the valid tokens.
    priors: Vec<(Token, f64)>,
    expanded: bool,
    visits: u32,
    value_sum: f64,
    best_return: Option<i64>,
}

impl McNode {
    fn new(state: DecodeState) -> Self {
        McNode {
            state,
            children: Vec::new(),
            priors: Vec::new(),
            expanded: false,
            visits: 0,
            value_sum: 0.0,
            best_return: None,
        }
    }

    fn child(&self, token: Token) -> Option<usize> {
        self.children.iter().find(|(t, _)| *t == token).map(|&(_, i)| i)
    }
}

fn expand<P: Policy + ?Sized>(node: &mut McNode, policy: &P, spec: &EquivSpec) -> Result<(), DecodeError> {
    let mask = node.state.valid_choices(spec);
    if !mask.is_empty() && !node.state.is_finished() {
        let probs = masked_probs(&policy.scores(&node.state)?, mask)?;
        node.priors = mask.iter().map(|t| (t, probs[t.id()])).collect();
    }
    node.expanded = true;
    Ok(())
}

/// Samples the masked policy until EOS; `None` when the length budget runs out.
fn rollout<P: Policy + ?Sized>(
    mut state: DecodeState,
    policy: &P,
    spec: &EquivSpec,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<DecodeState>, DecodeError> {
    while !state.is_finished() {
        if state.len() >= max_len {
            return Ok(None);
        }
        let mask = state.valid_choices(spec);
        if mask.is_empty() {
            return Ok(None);
        }
        let probs = masked_probs(&policy.scores(&state)?, mask)?;
        let token = sample_token(&probs, rng).ok_or(DecodeError::DeadEnd)?;
        state.step(token, spec)?;
    }
    debug_assert_eq!(state.reward(), -(state.to_aig().count_ands() as i64));
    Ok(Some(state))
}

/// Chooses the next token from `root` by running `cfg.rollouts` simulations.
pub fn mcts_decide<P: Policy + ?Sized>(
    root: &DecodeState,
    policy: &P,
    spec: &EquivSpec,
    cfg: &SearchConfig,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Decision, DecodeError> {
    let mask = root.valid_choices(spec);
    if mask.is_empty() {
        return Err(DecodeError::DeadEnd);
    }
    let base_reward = root.reward();
    // Any legal return is at least -max_len; failures score strictly below that.
    let failure_value = -(max_len as f64) - 1.0;

    let mut tree = vec![McNode::new(root.clone())];
    expand(&mut tree[0], policy, spec)?;
    let mut best_episode: Option<Episode> = None;
    let (mut completed, mut failed) = (0, 0);

    for _ in 0..cfg.rollouts.max(1) {
        let mut path = vec![0usize];
        let mut node = 0usize;
        let mut leaf_created = false;
        while !tree[node].state.is_finished() && !leaf_created {
            if !tree[node].expanded {
                let n = &mut tree[node];
                expand(n, policy, spec)?;
            }
            if tree[node].priors.is_empty() {
                break;
            }
            let token = select(&tree, node, cfg.c_uct);
            node = match tree[node].child(token) {
                Some(child) => child,
                None => {
                    let mut state = tree[node].state.clone();
                    state.step(token, spec)?;
                    tree.push(McNode::new(state));
                    let child = tree.len() - 1;
                    tree[node].children.push((token, child));
                    leaf_created = true;
                    child
                }
            };
            path.push(node);
        }

        let outcome = if tree[node].state.is_finished() {
            Some(tree[node].state.clone())
        } else {
            rollout(tree[node].state.clone(), policy, spec, max_len, rng)?
        };
        let (value, ret) = match &outcome {
            Some(done) => {
                completed += 1;
                let ret = done.reward() - base_reward;
                if best_episode.as_ref().is_none_or(|b| done.reward() > b.reward) {
                    best_episode = Some(Episode {
                        tokens: done.items().iter().map(|i| i.token).collect(),
                        reward: done.reward(),
                    });
                }
                (ret as f64, Some(ret))
            }
            None => {
                failed += 1;
                (failure_value, None)
            }
        };
        for &i in &path {
            let n = &mut tree[i];
            n.visits += 1;
            n.value_sum += value;
            if let Some(r) = ret {
                n.best_return = Some(n.best_return.map_or(r, |b| b.max(r)));
            }
        }
    }

    let root_node = &tree[0];
    let children: Vec<ChildStats> = root_node
        .priors
        .iter()
        .map(|&(token, prior)| match root_node.child(token) {
            Some(i) => ChildStats {
                token,
                visits: tree[i].visits,
                mean_return: tree[i].value_sum / tree[i].visits.max(1) as f64,
                best_return: tree[i].best_return,
                prior,
            },
            None => ChildStats {
                token,
                visits: 0,
                mean_return: 0.0,
                best_return: None,
                prior,
            },
        })
        .collect();
    let token = choose_final(&children).ok_or(DecodeError::DeadEnd)?;
    Ok(Decision {
        token,
        children,
        best_episode,
        completed_rollouts: completed,
        failed_rollouts: failed,
    })
}

/// PUCT selection; unvisited children count as return 0, which is optimistic
/// because every return is non-positive.
fn select(tree: &[McNode], node: usize, c_uct: f64) -> Token {
    let n = &tree[node];
    let sqrt_n = (n.visits.max(1) as f64).sqrt();
    let mut best = (n.priors[0].0, f64::NEG_INFINITY);
    for &(token, prior) in &n.priors {
        let (q, visits) = match n.child(token) {
            Some(i) => (tree[i].value_sum / tree[i].visits.max(1) as f64, tree[i].visits),
            None => (0.0, 0),
        };
        let score = q + c_uct * prior * sqrt_n / (1.0 + visits as f64);
        if score > best.1 {
            best = (token, score);
        }
    }
    best.0
}

/// Max best-seen return; ties by visits, then lowest token id.
fn choose_final(children: &[ChildStats]) -> Option<Token> {
    children
        .iter()
        .max_by(|a, b| {
            let ka = (a.best_return.unwrap_or(i64::MIN), a.visits);
            let kb = (b.best_return.unwrap_or(i64::MIN), b.visits);
            ka.cmp(&kb)
                .then_with(|| a.prior.total_cmp(&b.prior))
                .then_with(|| b.token.cmp(&a.token))
        })
        .map(|c| c.token)
}

#[derive(Clone, Debug)]
pub struct Synthesized {
    pub aig: Aig,
    pub trajectory: Trajectory,
    pub reward: i64,
    /// True when the best searched rollout beat the greedy completion.
    pub from_rollout: bool,
    pub decisions: Vec<Token>,
}

/// Search for the first `cfg.steps` decisions, greedy decoding afterwards.
/// The best complete episode found by any rollout is kept and returned when
/// it beats (or replaces a failed) greedy completion.
pub fn synthesize_mcts<P: Policy + ?Sized>(
    policy: &P,
    spec: &EquivSpec,
    cfg: &SearchConfig,
    max_len: usize,
) -> Result<Synthesized, DecodeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = DecodeState::for_spec(spec);
    let mut best: Option<Episode> = None;
    let mut decisions = Vec::new();
    let mut failure = None;

    while !state.is_finished() {
        if state.len() >= max_len {
            failure = Some(DecodeError::LengthExceeded { max_len });
            break;
        }
        let mask = state.valid_choices(spec);
        if mask.is_empty() {
            failure = Some(DecodeError::DeadEnd);
            break;
        }
        let token = if decisions.len() < cfg.steps && mask.len() > 1 {
            let d = mcts_decide(&state, policy, spec, cfg, max_len, &mut rng)?;
            if let Some(ep) = d.best_episode {
                if best.as_ref().is_none_or(|b| ep.reward > b.reward) {
                    best = Some(ep);
                }
            }
            d.token
        } else {
            let scores = policy.scores(&state)?;
            masked_probs(&scores, mask)?;
            greedy_token(&scores, mask).ok_or(DecodeError::DeadEnd)?
        };
        decisions.push(token);
        state.step(token, spec)?;
    }

    let greedy_reward = failure.is_none().then(|| state.reward());
    match best {
        Some(ep) if greedy_reward.is_none_or(|g| ep.reward > g) => {
            let replay = crate::decoder::generate(policy, spec, max_len, DecodeMode::Forced(&ep.tokens))?;
            Ok(Synthesized {
                aig: replay.aig,
                trajectory: replay.trajectory,
                reward: replay.reward,
                from_rollout: true,
                decisions,
            })
        }
        _ => match failure {
            Some(e) => Err(e),
            None => {
                let g = finish(state, spec)?;
                Ok(Synthesized {
                    aig: g.aig,
                    trajectory: g.trajectory,
                    reward: g.reward,
                    from_rollout: false,
                    decisions,
                })
            }
        },
    }
}
