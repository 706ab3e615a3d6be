#pragma once

// Policy-gradient actor-critic learners: the selfish learner, the status-quo
// aware learner (an extra gradient term computed on an imagined episode where
// the previous joint action repeats for kappa steps), and fixed-strategy
// opponents for exploitability runs.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqlab/coin_game.hpp"
#include "sqlab/matrix_game.hpp"
#include "sqlab/nn.hpp"
#include "sqlab/rng.hpp"

namespace sqlab {

struct SQConfig {
    int z = 10;               // imagined-repetition cap; kappa ~ U{1..z}
    double alpha = 1.0;       // weight of the standard policy-gradient term
    double beta = 1.0;        // weight of the status-quo term
    double gamma = 0.96;
    double actor_step = 0.005;
    double critic_step = 1.0;
    int batch_size = 200;

    void validate() const {
        if (z < 1) throw std::invalid_argument("SQConfig: z must be >= 1");
        if (alpha < 0.0 || beta < 0.0)
            throw std::invalid_argument("SQConfig: alpha/beta must be >= 0");
        if (gamma < 0.0 || gamma >= 1.0) throw std::domain_error("SQConfig: gamma outside [0,1)");
        if (actor_step <= 0.0 || critic_step <= 0.0)
            throw std::invalid_argument("SQConfig: step sizes must be > 0");
        if (batch_size < 1) throw std::invalid_argument("SQConfig: batch_size must be >= 1");
    }
};

// Actor maps the state encoding to the probability of the first action
// (cooperate); critic maps it to a scalar value.
struct PolicyParameters {
    nn::NetworkModel actor;
    nn::NetworkModel critic;
};

// One logit / one value per state: 5-parameter tables over the one-hot
// state encoding.
inline PolicyParameters make_matrix_policy(Rng& rng) {
    PolicyParameters p;
    p.actor = nn::make_network({nn::dense(kMatrixStateCount, 1, nn::Activation::sigmoid, false)}, rng);
    p.critic = nn::make_network({nn::dense(kMatrixStateCount, 1, nn::Activation::linear, false)}, rng);
    return p;
}

inline PolicyParameters make_coin_policy(Rng& rng) {
    PolicyParameters p;
    p.actor = nn::make_network(
        {nn::conv2d(kGridSize, kGridSize, 4, 12, 3, nn::Padding::valid, nn::Activation::relu),
         nn::dense(12, 16, nn::Activation::relu),
         nn::dense(16, 1, nn::Activation::sigmoid)},
        rng);
    p.critic = nn::make_network(
        {nn::conv2d(kGridSize, kGridSize, 4, 12, 3, nn::Padding::valid, nn::Activation::relu),
         nn::dense(12, 16, nn::Activation::relu),
         nn::dense(16, 1, nn::Activation::linear)},
        rng);
    return p;
}

// Draws action 0 with the actor's output probability; deterministic given the
// rng stream position.
inline int sample_action(const PolicyParameters& policy, std::span<const double> input, Rng& rng) {
    const double p = nn::forward(policy.actor, input)[0];
    return rng.bernoulli(p) ? 0 : 1;
}

// R_t = sum_{l=t..T} gamma^{l-t} r_l.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
    std::vector<double> out(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    return out;
}

// Imagined status-quo return: the previous step's reward repeats for kappa_t
// steps before the actual tail resumes,
//   Rhat_t = ((1 - gamma^kappa_t) / (1 - gamma)) r_{t-1} + gamma^kappa_t R_t.
// Index 0 has no previous step; its slot is NaN and must not be consumed.
inline std::vector<double> imagined_returns(std::span<const double> rewards,
                                            std::span<const int> kappa, double gamma) {
    if (kappa.size() != rewards.size())
        throw std::invalid_argument("imagined_returns: kappa length mismatch");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::domain_error("imagined_returns: gamma outside [0,1)");
    const std::vector<double> returns = discounted_returns(rewards, gamma);
    std::vector<double> out(rewards.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 1; t < rewards.size(); ++t) {
        if (kappa[t] < 1) throw std::invalid_argument("imagined_returns: kappa must be >= 1");
        const double gk = std::pow(gamma, static_cast<double>(kappa[t]));
        out[t] = (1.0 - gk) / (1.0 - gamma) * rewards[t - 1] + gk * returns[t];
    }
    return out;
}

// One agent's view of one episode: its own inputs, actions, action
// probabilities and rewards. The opponent's actions are visible only through
// the state encoding; its rewards and parameters never cross.
struct EpisodeView {
    int input_dim = 0;
    std::vector<double> inputs;  // steps * input_dim, row-major
    std::vector<int> actions;    // own action per step (0 = cooperate slot)
    std::vector<double> probs;   // P(action = 0 | s_t) at rollout time
    std::vector<double> rewards;

    int steps() const { return static_cast<int>(actions.size()); }
    std::span<const double> input(int t) const {
        return {inputs.data() + static_cast<std::size_t>(t) * input_dim,
                static_cast<std::size_t>(input_dim)};
    }
    void reserve(int steps, int dim) {
        input_dim = dim;
        inputs.reserve(static_cast<std::size_t>(steps) * dim);
        actions.reserve(steps);
        probs.reserve(steps);
        rewards.reserve(steps);
    }
    void push(std::span<const double> in, int action, double prob, double reward) {
        inputs.insert(inputs.end(), in.begin(), in.end());
        actions.push_back(action);
        probs.push_back(prob);
        rewards.push_back(reward);
    }
};

namespace detail {

// d log pi(a | s) / d p where p = P(action 0 | s).
inline double dlog_prob(int action, double p) {
    return action == 0 ? 1.0 / p : -1.0 / (1.0 - p);
}

}  // namespace detail

// sum_t dlog pi(u_t | s_t) * gamma^t * (R_t - b(s_t)), with the baseline b
// taken from the critic.
inline std::vector<double> policy_gradient(const EpisodeView& v, std::span<const double> returns,
                                           const PolicyParameters& policy, double gamma) {
    if (returns.size() != static_cast<std::size_t>(v.steps()))
        throw std::invalid_argument("policy_gradient: returns misaligned with trajectory");
    std::vector<double> grad(policy.actor.parameter_count(), 0.0);
    nn::Workspace ws, wsc;
    double gt = 1.0;
    for (int t = 0; t < v.steps(); ++t) {
        const double b = nn::forward(policy.critic, v.input(t), wsc)[0];
        const double p = nn::forward(policy.actor, v.input(t), ws)[0];
        const double og = detail::dlog_prob(v.actions[t], p) * gt * (returns[t] - b);
        nn::backward_into(policy.actor, ws, std::array<double, 1>{og}, grad);
        gt *= gamma;
    }
    return grad;
}

// Status-quo gradient. The log-probability term reinforces the PREVIOUS
// action at the current state:
//   sum_{t>=1} dlog pi(u_{t-1} | s_t) * gamma^t * (Rhat_t - b(s_t)).
inline std::vector<double> sq_policy_gradient(const EpisodeView& v,
                                              std::span<const double> imagined,
                                              const PolicyParameters& policy, double gamma) {
    if (imagined.size() != static_cast<std::size_t>(v.steps()))
        throw std::invalid_argument("sq_policy_gradient: imagined returns misaligned");
    std::vector<double> grad(policy.actor.parameter_count(), 0.0);
    nn::Workspace ws, wsc;
    double gt = gamma;
    for (int t = 1; t < v.steps(); ++t) {
        const double b = nn::forward(policy.critic, v.input(t), wsc)[0];
        const double p = nn::forward(policy.actor, v.input(t), ws)[0];
        const double og = detail::dlog_prob(v.actions[t - 1], p) * gt * (imagined[t] - b);
        nn::backward_into(policy.actor, ws, std::array<double, 1>{og}, grad);
        gt *= gamma;
    }
    return grad;
}

enum class LearnerKind { status_quo, selfish, always_cooperate, always_defect };

inline bool trainable(LearnerKind k) {
    return k == LearnerKind::status_quo || k == LearnerKind::selfish;
}

// A learner seat: policy parameters plus the update configuration. Fixed
// strategies expose zero trainable parameters. The selfish learner is the
// beta = 0 degenerate configuration of the same update path.
struct Learner {
    LearnerKind kind = LearnerKind::status_quo;
    SQConfig cfg;
    PolicyParameters params;

    int fixed_action() const {
        return kind == LearnerKind::always_cooperate ? 0 : 1;
    }
};

inline Learner make_matrix_learner(LearnerKind kind, SQConfig cfg, Rng& init_rng) {
    cfg.validate();
    if (kind == LearnerKind::selfish) cfg.beta = 0.0;
    Learner l;
    l.kind = kind;
    l.cfg = cfg;
    if (trainable(kind)) l.params = make_matrix_policy(init_rng);
    return l;
}

inline Learner make_coin_learner(LearnerKind kind, SQConfig cfg, Rng& init_rng) {
    cfg.validate();
    if (kind == LearnerKind::selfish) cfg.beta = 0.0;
    Learner l;
    l.kind = kind;
    l.cfg = cfg;
    if (trainable(kind)) l.params = make_coin_policy(init_rng);
    return l;
}

// One update from a batch of episodes:
//   actor  += actor_step * (alpha * pg + beta * sq_pg), averaged over batch
//   critic -= critic_step * d/dtheta MSE(critic(s_t), R_t) over all steps,
//             with each step weighted by gamma^t.
// The critic regression carries the same gamma^t weights as the gradient
// estimator; an unweighted fit skews the baseline toward late-horizon
// returns, which are systematically smaller in magnitude than the
// early-horizon returns the gamma^t-weighted gradient actually sees.
// The kappa stream is consumed only when beta != 0, so selfish and
// status-quo configurations with beta = 0 follow identical arithmetic.
// Fixed-strategy learners are a no-op.
inline void combined_update(Learner& l, std::span<const EpisodeView> batch, Rng& kappa_rng) {
    if (batch.empty()) throw std::invalid_argument("combined_update: empty batch");
    if (!trainable(l.kind)) return;
    const SQConfig& cfg = l.cfg;
    const bool use_sq = cfg.beta != 0.0;

    std::vector<double> actor_grad(l.params.actor.parameter_count(), 0.0);
    std::vector<double> critic_grad(l.params.critic.parameter_count(), 0.0);
    nn::Workspace ws, wsc;
    std::vector<int> kappa;
    std::vector<double> baselines;

    double total_weight = 0.0;
    for (const EpisodeView& v : batch) {
        double gt = 1.0;
        for (int t = 0; t < v.steps(); ++t) {
            total_weight += gt;
            gt *= cfg.gamma;
        }
    }

    const double actor_scale_pg = cfg.alpha / static_cast<double>(batch.size());
    const double actor_scale_sq = cfg.beta / static_cast<double>(batch.size());

    for (const EpisodeView& v : batch) {
        const std::vector<double> returns = discounted_returns(v.rewards, cfg.gamma);
        std::vector<double> imagined;
        if (use_sq) {
            kappa.assign(v.steps(), 1);
            for (int t = 1; t < v.steps(); ++t)
                kappa[t] = static_cast<int>(kappa_rng.uniform_int(1, cfg.z));
            imagined = imagined_returns(v.rewards, kappa, cfg.gamma);
        }
        baselines.resize(v.steps());
        for (int t = 0; t < v.steps(); ++t)
            baselines[t] = nn::forward(l.params.critic, v.input(t), wsc)[0];

        double gt = 1.0;
        for (int t = 0; t < v.steps(); ++t) {
            const double p = nn::forward(l.params.actor, v.input(t), ws)[0];
            double og = actor_scale_pg * detail::dlog_prob(v.actions[t], p) * gt *
                        (returns[t] - baselines[t]);
            if (use_sq && t >= 1)
                og += actor_scale_sq * detail::dlog_prob(v.actions[t - 1], p) * gt *
                      (imagined[t] - baselines[t]);
            if (og != 0.0)
                nn::backward_into(l.params.actor, ws, std::array<double, 1>{og}, actor_grad);
            gt *= cfg.gamma;
        }
        gt = 1.0;
        for (int t = 0; t < v.steps(); ++t) {
            nn::forward(l.params.critic, v.input(t), wsc);
            const double og = 2.0 * gt * (baselines[t] - returns[t]) / total_weight;
            nn::backward_into(l.params.critic, wsc, std::array<double, 1>{og}, critic_grad);
            gt *= cfg.gamma;
        }
    }

    nn::OptimizerState actor_opt = nn::make_sgd(cfg.actor_step);
    nn::optimizer_step(l.params.actor, actor_opt, actor_grad, nn::Direction::ascend);
    nn::OptimizerState critic_opt = nn::make_sgd(cfg.critic_step);
    nn::optimizer_step(l.params.critic, critic_opt, critic_grad, nn::Direction::descend);
}

// ---------------------------------------------------------------------------
// Rollouts and pair training.

struct MatrixRollout {
    MatrixTrajectory trajectory;
    std::array<EpisodeView, 2> views;
};

inline MatrixRollout rollout_matrix_episode(MatrixGameEnv& env, const Learner& l1,
                                            const Learner& l2, Rng& rng1, Rng& rng2,
                                            nn::Workspace& ws) {
    env.reset();
    const int len = env.episode_length();
    MatrixRollout out;
    out.trajectory.state_indices.reserve(len);
    out.trajectory.joint_actions.reserve(len);
    out.trajectory.rewards[0].reserve(len);
    out.trajectory.rewards[1].reserve(len);
    out.views[0].reserve(len, kMatrixStateCount);
    out.views[1].reserve(len, kMatrixStateCount);

    auto act = [&ws](const Learner& l, std::span<const double> input, Rng& rng, double& p_out) {
        if (!trainable(l.kind)) {
            p_out = l.fixed_action() == 0 ? 1.0 : 0.0;
            return l.fixed_action();
        }
        p_out = nn::forward(l.params.actor, input, ws)[0];
        return rng.bernoulli(p_out) ? 0 : 1;
    };

    while (!env.finished()) {
        const std::array<double, 5> enc = env.state().encode();
        const int s_index = env.state().index;
        double p1 = 0.0, p2 = 0.0;
        const int a1 = act(l1, enc, rng1, p1);
        const int a2 = act(l2, enc, rng2, p2);
        const auto [next, r] = env.step(a1, a2);
        (void)next;
        out.trajectory.state_indices.push_back(s_index);
        out.trajectory.joint_actions.emplace_back(a1, a2);
        out.trajectory.rewards[0].push_back(r.row);
        out.trajectory.rewards[1].push_back(r.col);
        // Agent 2's view transposes the joint action so that its own action
        // comes first in the state convention it observes.
        out.views[0].push(enc, a1, p1, r.row);
        out.views[1].push(enc, a2, p2, r.col);
    }
    return out;
}

struct PairEpochMetrics {
    std::array<double, 2> value{};           // NDR (matrix) or own-coin probability
    std::array<double, 2> defection_rate{};  // fraction of action 1 per agent
};

struct PairTrainResult {
    std::vector<PairEpochMetrics> per_epoch;
    Learner learner1, learner2;
};

// Trains two learners against each other; each update consumes only that
// learner's own trajectory view. Metric per epoch is the batch-mean NDR.
inline PairTrainResult train_matrix_pair(GameKind kind, LearnerKind k1, LearnerKind k2,
                                         const SQConfig& cfg, int episode_length, int epochs,
                                         std::uint64_t seed) {
    Rng init1 = named_stream(seed, "agent1/init");
    Rng init2 = named_stream(seed, "agent2/init");
    Rng act1 = named_stream(seed, "agent1/act");
    Rng act2 = named_stream(seed, "agent2/act");
    Rng kappa1 = named_stream(seed, "kappa/1");
    Rng kappa2 = named_stream(seed, "kappa/2");

    PairTrainResult result;
    result.learner1 = make_matrix_learner(k1, cfg, init1);
    result.learner2 = make_matrix_learner(k2, cfg, init2);

    MatrixGameEnv env(kind, episode_length);
    nn::Workspace ws;
    std::array<std::vector<EpisodeView>, 2> views;
    result.per_epoch.reserve(epochs);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        views[0].clear();
        views[1].clear();
        PairEpochMetrics m{};
        long defect[2] = {0, 0};
        for (int b = 0; b < cfg.batch_size; ++b) {
            MatrixRollout ep = rollout_matrix_episode(env, result.learner1, result.learner2,
                                                      act1, act2, ws);
            m.value[0] += ndr(ep.views[0].rewards, cfg.gamma);
            m.value[1] += ndr(ep.views[1].rewards, cfg.gamma);
            for (int a : ep.views[0].actions) defect[0] += a;
            for (int a : ep.views[1].actions) defect[1] += a;
            views[0].push_back(std::move(ep.views[0]));
            views[1].push_back(std::move(ep.views[1]));
        }
        const double steps = static_cast<double>(cfg.batch_size) * episode_length;
        m.value[0] /= cfg.batch_size;
        m.value[1] /= cfg.batch_size;
        m.defection_rate[0] = defect[0] / steps;
        m.defection_rate[1] = defect[1] / steps;
        result.per_epoch.push_back(m);
        combined_update(result.learner1, views[0], kappa1);
        combined_update(result.learner2, views[1], kappa2);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Coin Game meta-play: the two-way action space is {consult cooperation
// oracle, consult defection oracle}; the chosen oracle supplies the move.

using CoinPolicyFn = std::function<Move(std::span<const double>)>;

struct CoinTrainOptions {
    int episode_length = 200;
    RespawnMode respawn = RespawnMode::keep_positions;
};

struct CoinRollout {
    std::array<EpisodeView, 2> views;
    std::vector<PickEvent> events;
};

inline CoinRollout rollout_coin_episode(const CoinTrainOptions& opts, const Learner& l1,
                                        const Learner& l2,
                                        const std::array<CoinPolicyFn, 2>& oracles1,
                                        const std::array<CoinPolicyFn, 2>& oracles2,
                                        Rng& env_rng, Rng& rng1, Rng& rng2,
                                        nn::Workspace& ws) {
    CoinRollout out;
    out.views[0].reserve(opts.episode_length, kObservationSize);
    out.views[1].reserve(opts.episode_length, kObservationSize);
    out.events.reserve(opts.episode_length / 4);

    GridState state = coin_reset(env_rng);
    auto meta = [&ws](const Learner& l, std::span<const double> obs, Rng& rng, double& p_out) {
        if (!trainable(l.kind)) {
            p_out = l.fixed_action() == 0 ? 1.0 : 0.0;
            return l.fixed_action();
        }
        p_out = nn::forward(l.params.actor, obs, ws)[0];
        return rng.bernoulli(p_out) ? 0 : 1;
    };

    for (int t = 0; t < opts.episode_length; ++t) {
        const auto obs_red = observe(state, AgentColor::red);
        const auto obs_blue = observe(state, AgentColor::blue);
        double p1 = 0.0, p2 = 0.0;
        const int u1 = meta(l1, obs_red, rng1, p1);
        const int u2 = meta(l2, obs_blue, rng2, p2);
        const Move m1 = oracles1[u1](obs_red);
        const Move m2 = oracles2[u2](obs_blue);
        auto [next, ev] = coin_step(state, m1, m2, env_rng, opts.respawn);
        out.views[0].push(obs_red, u1, p1, ev.red_reward);
        out.views[1].push(obs_blue, u2, p2, ev.blue_reward);
        if (ev.picker != Picker::none) out.events.push_back(ev);
        state = next;
    }
    return out;
}

// Per-epoch coin metric: own-coin pick probability over the whole batch
// (NaN when the agent picked nothing in the batch).
inline PairTrainResult train_coin_pair(LearnerKind k1, LearnerKind k2, const SQConfig& cfg,
                                       const std::array<CoinPolicyFn, 2>& oracles1,
                                       const std::array<CoinPolicyFn, 2>& oracles2,
                                       const CoinTrainOptions& opts, int epochs,
                                       std::uint64_t seed) {
    Rng env_rng = named_stream(seed, "env");
    Rng init1 = named_stream(seed, "agent1/init");
    Rng init2 = named_stream(seed, "agent2/init");
    Rng act1 = named_stream(seed, "agent1/act");
    Rng act2 = named_stream(seed, "agent2/act");
    Rng kappa1 = named_stream(seed, "kappa/1");
    Rng kappa2 = named_stream(seed, "kappa/2");

    PairTrainResult result;
    result.learner1 = make_coin_learner(k1, cfg, init1);
    result.learner2 = make_coin_learner(k2, cfg, init2);

    nn::Workspace ws;
    std::array<std::vector<EpisodeView>, 2> views;
    std::vector<PickEvent> events;
    result.per_epoch.reserve(epochs);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        views[0].clear();
        views[1].clear();
        events.clear();
        long defect[2] = {0, 0};
        for (int b = 0; b < cfg.batch_size; ++b) {
            CoinRollout ep = rollout_coin_episode(opts, result.learner1, result.learner2,
                                                  oracles1, oracles2, env_rng, act1, act2, ws);
            for (int a : ep.views[0].actions) defect[0] += a;
            for (int a : ep.views[1].actions) defect[1] += a;
            views[0].push_back(std::move(ep.views[0]));
            views[1].push_back(std::move(ep.views[1]));
            events.insert(events.end(), ep.events.begin(), ep.events.end());
        }
        PairEpochMetrics m{};
        const auto own1 = own_coin_probability(events, AgentColor::red);
        const auto own2 = own_coin_probability(events, AgentColor::blue);
        m.value[0] = own1 ? *own1 : std::numeric_limits<double>::quiet_NaN();
        m.value[1] = own2 ? *own2 : std::numeric_limits<double>::quiet_NaN();
        const double steps = static_cast<double>(cfg.batch_size) * opts.episode_length;
        m.defection_rate[0] = defect[0] / steps;
        m.defection_rate[1] = defect[1] / steps;
        result.per_epoch.push_back(m);
        combined_update(result.learner1, views[0], kappa1);
        combined_update(result.learner2, views[1], kappa2);
    }
    return result;
}

}  // namespace sqlab
