#pragma once

// Iterated 2x2 matrix games (prisoner's dilemma, matching pennies, stag hunt)
// with the previous joint action as state, plus the normalized discounted
// reward metric.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sqlab {

enum class GameKind { prisoners_dilemma, matching_pennies, stag_hunt };

// Action 0 is C (or H), action 1 is D (or T).
inline const char* action_name(GameKind kind, int a) {
    if (a != 0 && a != 1) throw std::invalid_argument("action_name: invalid action");
    if (kind == GameKind::matching_pennies) return a == 0 ? "H" : "T";
    return a == 0 ? "C" : "D";
}

struct Payoff {
    double row = 0.0;
    double col = 0.0;
};

inline Payoff payoff(GameKind kind, int row_action, int col_action) {
    if ((row_action != 0 && row_action != 1) || (col_action != 0 && col_action != 1))
        throw std::invalid_argument("payoff: invalid action label");
    const int cell = row_action * 2 + col_action;
    switch (kind) {
        case GameKind::prisoners_dilemma: {
            constexpr Payoff t[4] = {{-1, -1}, {-3, 0}, {0, -3}, {-2, -2}};
            return t[cell];
        }
        case GameKind::matching_pennies: {
            constexpr Payoff t[4] = {{+1, -1}, {-1, +1}, {-1, +1}, {+1, -1}};
            return t[cell];
        }
        case GameKind::stag_hunt: {
            constexpr Payoff t[4] = {{0, 0}, {-4, -1}, {-1, -4}, {-3, -3}};
            return t[cell];
        }
    }
    throw std::invalid_argument("payoff: unknown game kind");
}

// State = the previous joint action, with a distinct slot for the first
// iteration. Encoded as a one-hot length-5 vector over
// {initial, CC, CD, DC, DD} (respectively {initial, HH, HT, TH, TT}).
struct MatrixState {
    int index = 0;  // 0 = initial, otherwise 1 + 2*a1 + a2

    static MatrixState initial() { return MatrixState{0}; }
    static MatrixState after(int a1, int a2) { return MatrixState{1 + a1 * 2 + a2}; }

    std::optional<std::pair<int, int>> previous_joint_action() const {
        if (index == 0) return std::nullopt;
        return std::make_pair((index - 1) / 2, (index - 1) % 2);
    }

    std::array<double, 5> encode() const {
        std::array<double, 5> v{};
        v[index] = 1.0;
        return v;
    }
};

inline constexpr int kMatrixStateCount = 5;

// Ordered record of one episode: s_t is the state before joint action u_t.
struct MatrixTrajectory {
    std::vector<int> state_indices;
    std::vector<std::pair<int, int>> joint_actions;
    std::array<std::vector<double>, 2> rewards;

    std::size_t length() const { return joint_actions.size(); }
};

struct EpisodeComplete : std::logic_error {
    EpisodeComplete() : std::logic_error("matrix game: episode already finished") {}
};

// Two-player simultaneous-move iterated matrix game. The horizon is hidden
// from the agents: MatrixState carries no remaining-step information.
class MatrixGameEnv {
public:
    explicit MatrixGameEnv(GameKind kind, int episode_length = 200)
        : kind_(kind), episode_length_(episode_length) {
        if (episode_length <= 0)
            throw std::invalid_argument("MatrixGameEnv: episode_length must be positive");
    }

    GameKind kind() const { return kind_; }
    int episode_length() const { return episode_length_; }
    const MatrixState& state() const { return state_; }
    int steps_taken() const { return steps_; }
    bool finished() const { return steps_ >= episode_length_; }

    void reset() {
        state_ = MatrixState::initial();
        steps_ = 0;
    }

    std::pair<MatrixState, Payoff> step(int a1, int a2) {
        if (finished()) throw EpisodeComplete();
        const Payoff r = payoff(kind_, a1, a2);
        state_ = MatrixState::after(a1, a2);
        ++steps_;
        return {state_, r};
    }

private:
    GameKind kind_;
    int episode_length_;
    MatrixState state_ = MatrixState::initial();
    int steps_ = 0;
};

// Normalized discounted reward: (1 - gamma) * sum_t gamma^t r_t.
inline double ndr(std::span<const double> rewards, double gamma) {
    if (rewards.empty()) throw std::invalid_argument("ndr: empty reward list");
    if (gamma < 0.0 || gamma >= 1.0) throw std::domain_error("ndr: gamma outside [0,1)");
    double acc = 0.0;
    double w = 1.0;
    for (double r : rewards) {
        acc += w * r;
        w *= gamma;
    }
    return (1.0 - gamma) * acc;
}

}  // namespace sqlab
