#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "buildswitch/content.hpp"
#include "buildswitch/rng.hpp"

namespace bsw::sim {

/// One tick is five game-seconds, the interval between model evaluations.
inline constexpr int kTicksPerMinute = 12;

enum class Outcome : std::uint8_t { Ongoing, P0Win, P1Win };

struct Production {
    int type = 0;
    int remaining = 0;
    bool operator==(const Production&) const = default;
};

struct Research {
    int upgrade = 0;
    int remaining = 0;
    bool operator==(const Research&) const = default;
};

struct PlayerState {
    int faction = 0;
    int build_order = 0;
    std::vector<int> counts;           // per global unit type
    std::vector<double> damage_pool;   // fractional damage carried per unit type
    std::vector<Production> queue;
    std::vector<Research> research;
    std::vector<std::uint8_t> upgrades_done;  // per global upgrade id
    double minerals = 0.0;
    double gas = 0.0;
    int used_supply = 0;
    int max_supply = 0;
    double base_hp = 0.0;
    double skill = 1.0;  // per-game damage multiplier
    bool attacking = false;
    int travel_remaining = 0;
    int cooldown = 0;
    double attack_start_value = 0.0;
    std::vector<int> kills;  // enemy units of each type this player destroyed during the last tick

    bool operator==(const PlayerState&) const = default;
};

/// Full ground-truth state of one game.
struct GameState {
    std::uint64_t seed = 0;
    int clock = 0;
    int map = 0;
    std::array<PlayerState, 2> players;
    Rng rng;
    bool engaged = false;  // armies fought during the last tick
    Outcome outcome = Outcome::Ongoing;

    bool terminal() const { return outcome != Outcome::Ongoing; }
    bool operator==(const GameState&) const = default;
};

/// One player's fog-limited view.
struct RawObservation {
    int player = 0;
    int clock = 0;
    std::vector<int> own_counts;
    double minerals = 0.0;
    double gas = 0.0;
    int used_supply = 0;
    int max_supply = 0;
    std::vector<std::uint8_t> upgrades_done;
    std::vector<std::uint8_t> upgrades_researching;
    std::vector<int> enemy_visible;
    std::vector<int> enemy_deaths;
    int enemy_faction = 0;
    int map = 0;
    int build_order = 0;

    bool operator==(const RawObservation&) const = default;
};

/// Line-delimited structured records describing what happened in a game.
class EventLog {
public:
    void add(std::string line) { lines_.push_back(std::move(line)); }
    const std::vector<std::string>& lines() const { return lines_; }
    std::string dump() const;

private:
    std::vector<std::string> lines_;
};

GameState new_game(const Content& content, int map, int faction_p0, int faction_p1, int bo_p0, int bo_p1,
                   std::uint64_t seed);

/// Economy, production, upgrades, attack movement, combat, scouting
/// bookkeeping, clock, terminal check, in that order.
void advance_tick(const Content& content, GameState& state, EventLog* log = nullptr);

/// Simultaneous attrition between the two armies, or army-on-base damage when
/// a defender has no combat units. Draws the per-side damage noise from the
/// game RNG.
void resolve_combat(const Content& content, GameState& state, EventLog* log = nullptr);

/// Scouting sample for `player`. Uses an RNG stream derived from
/// (seed, clock, player), so observing never perturbs the game.
RawObservation observe(const Content& content, const GameState& state, int player);

/// True enemy unit counts; training-time ground truth only.
std::vector<int> full_state_counts(const GameState& state, int player);

void set_build_order(const Content& content, GameState& state, int player, int build_order, EventLog* log = nullptr);

/// Winner if terminal, Ongoing otherwise.
Outcome outcome(const GameState& state);

double army_value(const Content& content, const PlayerState& p);
int worker_count(const Content& content, const PlayerState& p);
/// Probability that a single hidden enemy unit is seen by `player` this tick.
double scouting_probability(const Content& content, const GameState& state, int player);

/// Plays a game with both players holding their build orders to the end.
Outcome play_fixed(const Content& content, int map, int faction_p0, int faction_p1, int bo_p0, int bo_p1,
                   std::uint64_t seed, EventLog* log = nullptr);

}  // namespace bsw::sim
