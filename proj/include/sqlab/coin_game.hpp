#pragma once

// The 3x3 Coin Game: two agents and one coin on a grid. Picking the coin of
// one's own color gives (+1, 0); picking the other agent's coin gives +1 to
// the picker and -2 to the owner.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqlab/rng.hpp"

namespace sqlab {

inline constexpr int kGridSize = 3;
inline constexpr int kObservationSize = kGridSize * kGridSize * 4;

enum class Move { up, down, left, right };
enum class CoinColor { red, blue };
enum class AgentColor { red, blue };
enum class Picker { none, red, blue, both };

inline AgentColor other(AgentColor a) {
    return a == AgentColor::red ? AgentColor::blue : AgentColor::red;
}

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

inline int cell_index(Cell c) { return c.row * kGridSize + c.col; }
inline Cell cell_from_index(int i) { return Cell{i / kGridSize, i % kGridSize}; }

struct GridState {
    Cell red_pos;
    Cell blue_pos;
    Cell coin_pos;
    CoinColor coin_color = CoinColor::red;
    int step_index = 0;

    bool operator==(const GridState&) const = default;
};

struct PickEvent {
    Picker picker = Picker::none;
    CoinColor coin_color = CoinColor::red;
    double red_reward = 0.0;
    double blue_reward = 0.0;

    bool picked_by(AgentColor a) const {
        if (picker == Picker::both) return true;
        return (picker == Picker::red && a == AgentColor::red) ||
               (picker == Picker::blue && a == AgentColor::blue);
    }
};

// How the world continues after a pick: by default the coin respawns on a
// random cell away from both agents and the agents keep their positions; the
// full_reset flag instead re-randomizes everything.
enum class RespawnMode { keep_positions, full_reset };

// Agents and coin placed uniformly at random on pairwise-distinct cells,
// coin color uniform.
inline GridState coin_reset(Rng& rng) {
    GridState s;
    s.red_pos = cell_from_index(static_cast<int>(rng.index_below(9)));
    do {
        s.blue_pos = cell_from_index(static_cast<int>(rng.index_below(9)));
    } while (s.blue_pos == s.red_pos);
    do {
        s.coin_pos = cell_from_index(static_cast<int>(rng.index_below(9)));
    } while (s.coin_pos == s.red_pos || s.coin_pos == s.blue_pos);
    s.coin_color = rng.bernoulli(0.5) ? CoinColor::red : CoinColor::blue;
    s.step_index = 0;
    return s;
}

inline Cell apply_move(Cell c, Move m) {
    switch (m) {
        case Move::up: c.row = c.row > 0 ? c.row - 1 : 0; break;
        case Move::down: c.row = c.row < kGridSize - 1 ? c.row + 1 : c.row; break;
        case Move::left: c.col = c.col > 0 ? c.col - 1 : 0; break;
        case Move::right: c.col = c.col < kGridSize - 1 ? c.col + 1 : c.col; break;
    }
    return c;
}

// Simultaneous moves with boundary clamping. If both agents land on the coin,
// both register a pick and the rewards sum componentwise from both rules.
inline std::pair<GridState, PickEvent> coin_step(const GridState& state, Move red_move,
                                                 Move blue_move, Rng& rng,
                                                 RespawnMode mode = RespawnMode::keep_positions) {
    GridState next = state;
    next.red_pos = apply_move(state.red_pos, red_move);
    next.blue_pos = apply_move(state.blue_pos, blue_move);
    next.step_index = state.step_index + 1;

    const bool red_picks = next.red_pos == state.coin_pos;
    const bool blue_picks = next.blue_pos == state.coin_pos;

    PickEvent ev;
    ev.coin_color = state.coin_color;
    if (red_picks && blue_picks) ev.picker = Picker::both;
    else if (red_picks) ev.picker = Picker::red;
    else if (blue_picks) ev.picker = Picker::blue;

    if (red_picks) {
        ev.red_reward += 1.0;
        if (state.coin_color == CoinColor::blue) ev.blue_reward -= 2.0;
    }
    if (blue_picks) {
        ev.blue_reward += 1.0;
        if (state.coin_color == CoinColor::red) ev.red_reward -= 2.0;
    }

    if (red_picks || blue_picks) {
        if (mode == RespawnMode::full_reset) {
            const int step = next.step_index;
            next = coin_reset(rng);
            next.step_index = step;
        } else {
            // New coin on a uniformly random cell not occupied by either
            // agent, uniformly random color.
            do {
                next.coin_pos = cell_from_index(static_cast<int>(rng.index_below(9)));
            } while (next.coin_pos == next.red_pos || next.coin_pos == next.blue_pos);
            next.coin_color = rng.bernoulli(0.5) ? CoinColor::red : CoinColor::blue;
        }
    }
    return {next, ev};
}

// 3x3x4 observation, channels {self, other agent, own coin, other coin},
// laid out [row][col][channel]. The blue perspective swaps the agent pair and
// the coin pair so every learner sees itself in channel 0.
inline std::array<double, kObservationSize> observe(const GridState& s, AgentColor perspective) {
    std::array<double, kObservationSize> obs{};
    const bool red_view = perspective == AgentColor::red;
    const int self_ch = 0, other_ch = 1;
    const int own_coin_ch = (red_view == (s.coin_color == CoinColor::red)) ? 2 : 3;
    const Cell self = red_view ? s.red_pos : s.blue_pos;
    const Cell opp = red_view ? s.blue_pos : s.red_pos;
    obs[cell_index(self) * 4 + self_ch] = 1.0;
    obs[cell_index(opp) * 4 + other_ch] = 1.0;
    obs[cell_index(s.coin_pos) * 4 + own_coin_ch] = 1.0;
    return obs;
}

// (# picks of own color by the agent) / (# picks by the agent); absent when
// the agent picked nothing.
inline std::optional<double> own_coin_probability(std::span<const PickEvent> events,
                                                  AgentColor agent) {
    long picks = 0, own = 0;
    const CoinColor own_color = agent == AgentColor::red ? CoinColor::red : CoinColor::blue;
    for (const PickEvent& ev : events) {
        if (!ev.picked_by(agent)) continue;
        ++picks;
        if (ev.coin_color == own_color) ++own;
    }
    if (picks == 0) return std::nullopt;
    return static_cast<double>(own) / static_cast<double>(picks);
}

}  // namespace sqlab
