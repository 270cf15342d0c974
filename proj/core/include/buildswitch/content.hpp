#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bsw::sim {

enum class Role : std::uint8_t { Worker, Combat, Building };

struct UnitTypeDef {
    int id = 0;
    std::string name;
    int faction = 0;
    Role role = Role::Combat;
    double hp = 1.0;
    double attack = 0.0;      // damage per tick
    double mineral_cost = 0.0;
    int build_ticks = 1;
    double value = 1.0;       // approximate worth, used for army value and feature scaling
    int supply = 0;
    int counter_class = -1;   // combat units only: 0, 1, 2
};

struct UpgradeDef {
    int id = 0;
    std::string name;
    int faction = 0;
    double mineral_cost = 0.0;
    double gas_cost = 0.0;
    int research_ticks = 1;
    double attack_mult = 1.0;
    double hp_mult = 1.0;
};

/// One line of a build order. The rule is active once every condition holds;
/// an active unit rule keeps producing `target` until own count (including
/// queued) reaches `count`.
struct ProductionRule {
    int min_tick = 0;
    int min_workers = 0;
    int min_tech = 0;
    bool upgrade = false;
    int target = 0;  // unit type id, or upgrade id when `upgrade`
    int count = 1;
};

struct BuildOrderScript {
    int id = 0;
    std::string name;
    int faction = 0;
    std::vector<int> versus;  // opponent factions this script is specialized for
    std::vector<ProductionRule> rules;
    double attack_trigger = 0.0;    // own army value at which the army attacks
    double retreat_fraction = 0.4;  // retreat once army value drops below this share of its attack-start value
};

struct MapDef {
    int id = 0;
    std::string name;
    int base_distance = 4;          // travel ticks between bases
    double mineral_richness = 1.0;  // multiplies gather rate
    double scout_radius = 1.0;      // multiplies scouting probability
};

struct FactionDef {
    int id = 0;
    std::string name;
    int worker_type = 0;
    int tech_type = 0;
    std::vector<int> combat_types;
};

/// Scripted opponent: a fixed build order played for the whole game.
struct OpponentDef {
    int id = 0;
    std::string name;
    int faction = 0;
    int build_order = 0;
    bool held_out = false;
};

struct GameParams {
    double gather_rate = 0.7;   // minerals per worker per tick
    double gas_rate = 0.5;      // gas per completed tech building per tick
    double kappa_base = 0.5;    // base-damage scale
    double base_hp = 1500.0;
    int max_game_ticks = 480;
    int start_workers = 6;
    double start_minerals = 50.0;
    int worker_saturation = 24;
    int base_supply = 100;
    int supply_per_tech = 25;
    int supply_cap = 200;
    int army_slots = 3;
    int army_slots_per_tech = 2;
    double combat_noise = 0.25;  // per-tick damage multiplier drawn from U(1-x, 1+x)
    double skill_spread = 0.1;   // per-game damage multiplier drawn from U(1-x, 1+x) for each player
    double base_defense = 6.0;   // damage per tick a base deals to an enemy army attacking it
    int attack_cooldown = 12;
    double scout_base = 0.04;
    double scout_per_unit = 0.004;
    double scout_max = 0.9;
};

/// A build order specialized against one opponent faction; the model has one
/// output per action.
struct Action {
    int build_order = 0;
    int versus_faction = 0;
};

struct Content {
    std::string schema = "buildswitch.content/1";
    GameParams params;
    int agent_faction = 0;
    std::vector<FactionDef> factions;
    std::vector<UnitTypeDef> units;
    std::vector<std::vector<double>> effectiveness;  // [attacker type][defender type]
    std::vector<UpgradeDef> upgrades;
    std::vector<BuildOrderScript> build_orders;
    std::vector<MapDef> maps;
    std::vector<OpponentDef> opponents;

    std::size_t num_unit_types() const { return units.size(); }
    std::size_t num_upgrades() const { return upgrades.size(); }

    /// Actions for the agent faction, in build-order then faction order.
    std::vector<Action> actions() const;
    /// Action index of (build order, opponent faction), or -1 if the build
    /// order is not specialized for that faction.
    int action_index(int build_order, int versus_faction) const;
    /// Build orders of `faction` specialized against `versus`.
    std::vector<int> build_orders_for(int faction, int versus) const;
    bool specialized(int build_order, int versus_faction) const;
};

/// The shipped content: 3 factions, 5 unit types each, 8 build orders per
/// faction, 5 maps and a scripted opponent roster.
Content builtin_content();

/// Throws ContractError describing the first violated invariant.
void validate(const Content& content);

std::string to_json(const Content& content);
Content content_from_json(const std::string& text);
Content load_content(const std::string& path);
void save_content(const Content& content, const std::string& path);

/// FNV-1a over the canonical serialization.
std::uint64_t content_hash(const Content& content);
std::string hash_hex(std::uint64_t h);

}  // namespace bsw::sim
