#include "buildswitch/game.hpp"

#include <algorithm>
#include <cmath>

#include "buildswitch/error.hpp"
#include "json.hpp"

namespace bsw::sim {

namespace {

using json = nlohmann::json;

const UnitTypeDef& unit(const Content& c, int type) { return c.units[static_cast<std::size_t>(type)]; }
const FactionDef& faction(const Content& c, int f) { return c.factions[static_cast<std::size_t>(f)]; }

int tech_done(const Content& c, const PlayerState& p) {
    return p.counts[static_cast<std::size_t>(faction(c, p.faction).tech_type)];
}

bool has_combat_units(const Content& c, const PlayerState& p) {
    for (int t : faction(c, p.faction).combat_types)
        if (p.counts[static_cast<std::size_t>(t)] > 0) return true;
    return false;
}

double attack_multiplier(const Content& c, const PlayerState& p) {
    double m = 1.0;
    for (const auto& u : c.upgrades)
        if (p.upgrades_done[static_cast<std::size_t>(u.id)]) m *= u.attack_mult;
    return m;
}

double hp_multiplier(const Content& c, const PlayerState& p) {
    double m = 1.0;
    for (const auto& u : c.upgrades)
        if (p.upgrades_done[static_cast<std::size_t>(u.id)]) m *= u.hp_mult;
    return m;
}

bool arrived(const PlayerState& p) { return p.attacking && p.travel_remaining == 0; }

int max_supply_for(const Content& c, const PlayerState& p) {
    const auto& gp = c.params;
    return std::min(gp.supply_cap, gp.base_supply + gp.supply_per_tech * tech_done(c, p));
}

void emit(EventLog* log, const GameState& s, const char* ev, json extra) {
    if (log == nullptr) return;
    extra["t"] = s.clock;
    extra["ev"] = ev;
    log->add(extra.dump());
}

void run_economy(const Content& c, const GameState& s, PlayerState& p) {
    const auto& gp = c.params;
    const double richness = c.maps[static_cast<std::size_t>(s.map)].mineral_richness;
    const int gatherers = std::min(worker_count(c, p), gp.worker_saturation);
    p.minerals += gatherers * gp.gather_rate * richness;
    p.gas += tech_done(c, p) * gp.gas_rate;
}

void run_production(const Content& c, GameState& s, int pid, EventLog* log) {
    PlayerState& p = s.players[static_cast<std::size_t>(pid)];
    const auto& gp = c.params;
    const auto& bo = c.build_orders[static_cast<std::size_t>(p.build_order)];
    const int workers = worker_count(c, p);
    const int techs = tech_done(c, p);

    auto queued = [&](int type) {
        return static_cast<int>(std::count_if(p.queue.begin(), p.queue.end(), [&](const Production& q) { return q.type == type; }));
    };
    auto queued_role = [&](Role r) {
        return static_cast<int>(std::count_if(p.queue.begin(), p.queue.end(),
                                              [&](const Production& q) { return unit(c, q.type).role == r; }));
    };
    auto slots_for = [&](Role r) {
        switch (r) {
            case Role::Worker: return 1;
            case Role::Building: return 1;
            case Role::Combat: return gp.army_slots + gp.army_slots_per_tech * techs;
        }
        return 0;
    };

    bool blocked = false;
    for (const auto& rule : bo.rules) {
        if (blocked) break;
        if (s.clock < rule.min_tick || workers < rule.min_workers || techs < rule.min_tech) continue;
        if (rule.upgrade) {
            const auto& up = c.upgrades[static_cast<std::size_t>(rule.target)];
            const bool researching = std::any_of(p.research.begin(), p.research.end(),
                                                 [&](const Research& r) { return r.upgrade == up.id; });
            if (p.upgrades_done[static_cast<std::size_t>(up.id)] || researching) continue;
            if (static_cast<int>(p.research.size()) >= techs) continue;
            if (p.minerals < up.mineral_cost || p.gas < up.gas_cost) {
                blocked = true;
                break;
            }
            p.minerals -= up.mineral_cost;
            p.gas -= up.gas_cost;
            p.research.push_back({up.id, up.research_ticks});
            emit(log, s, "research", {{"p", pid}, {"upgrade", up.name}});
            continue;
        }
        const auto& def = unit(c, rule.target);
        while (p.counts[static_cast<std::size_t>(def.id)] + queued(def.id) < rule.count) {
            if (queued_role(def.role) >= slots_for(def.role)) break;
            if (p.used_supply + def.supply > p.max_supply) break;
            if (p.minerals < def.mineral_cost) {
                blocked = true;
                break;
            }
            p.minerals -= def.mineral_cost;
            p.used_supply += def.supply;
            p.queue.push_back({def.id, def.build_ticks});
            emit(log, s, "queue", {{"p", pid}, {"unit", def.name}});
        }
    }

    std::vector<Production> still;
    still.reserve(p.queue.size());
    for (auto q : p.queue) {
        if (--q.remaining <= 0) {
            p.counts[static_cast<std::size_t>(q.type)] += 1;
            emit(log, s, "spawn", {{"p", pid}, {"unit", unit(c, q.type).name}});
        } else {
            still.push_back(q);
        }
    }
    p.queue = std::move(still);
    p.max_supply = max_supply_for(c, p);
}

void run_research(const Content& c, GameState& s, int pid, EventLog* log) {
    PlayerState& p = s.players[static_cast<std::size_t>(pid)];
    std::vector<Research> still;
    for (auto r : p.research) {
        if (--r.remaining <= 0) {
            p.upgrades_done[static_cast<std::size_t>(r.upgrade)] = 1;
            emit(log, s, "upgrade", {{"p", pid}, {"upgrade", c.upgrades[static_cast<std::size_t>(r.upgrade)].name}});
        } else {
            still.push_back(r);
        }
    }
    p.research = std::move(still);
}

void run_movement(const Content& c, GameState& s, int pid, EventLog* log) {
    PlayerState& p = s.players[static_cast<std::size_t>(pid)];
    if (p.attacking) {
        if (p.travel_remaining > 0) --p.travel_remaining;
        return;
    }
    if (p.cooldown > 0) {
        --p.cooldown;
        return;
    }
    const double value = army_value(c, p);
    const auto& bo = c.build_orders[static_cast<std::size_t>(p.build_order)];
    if (value > 0.0 && value >= bo.attack_trigger) {
        p.attacking = true;
        p.travel_remaining = c.maps[static_cast<std::size_t>(s.map)].base_distance;
        p.attack_start_value = value;
        emit(log, s, "attack", {{"p", pid}, {"army_value", value}});
    }
}

Outcome decide(const Content& c, GameState& s) {
    const auto& p0 = s.players[0];
    const auto& p1 = s.players[1];
    auto tiebreak = [&]() {
        const double a0 = army_value(c, p0), a1 = army_value(c, p1);
        if (a0 != a1) return a0 > a1 ? Outcome::P0Win : Outcome::P1Win;
        return s.rng.bernoulli(0.5) ? Outcome::P0Win : Outcome::P1Win;
    };
    const bool dead0 = p0.base_hp <= 0.0, dead1 = p1.base_hp <= 0.0;
    if (dead0 && dead1) return tiebreak();
    if (dead1) return Outcome::P0Win;
    if (dead0) return Outcome::P1Win;
    if (s.clock >= c.params.max_game_ticks) {
        if (p0.base_hp != p1.base_hp) return p0.base_hp > p1.base_hp ? Outcome::P0Win : Outcome::P1Win;
        return tiebreak();
    }
    return Outcome::Ongoing;
}

}  // namespace

std::string EventLog::dump() const {
    std::string out;
    for (const auto& l : lines_) {
        out += l;
        out += '\n';
    }
    return out;
}

double army_value(const Content& c, const PlayerState& p) {
    double v = 0.0;
    for (int t : faction(c, p.faction).combat_types) v += p.counts[static_cast<std::size_t>(t)] * unit(c, t).value;
    return v;
}

int worker_count(const Content& c, const PlayerState& p) {
    return p.counts[static_cast<std::size_t>(faction(c, p.faction).worker_type)];
}

GameState new_game(const Content& c, int map, int faction_p0, int faction_p1, int bo_p0, int bo_p1,
                   std::uint64_t seed) {
    const int nf = static_cast<int>(c.factions.size());
    expect(map >= 0 && map < static_cast<int>(c.maps.size()), "new_game: map out of range");
    expect(faction_p0 >= 0 && faction_p0 < nf && faction_p1 >= 0 && faction_p1 < nf, "new_game: faction out of range");
    const int factions[2] = {faction_p0, faction_p1};
    const int bos[2] = {bo_p0, bo_p1};
    for (int i = 0; i < 2; ++i) {
        expect(bos[i] >= 0 && bos[i] < static_cast<int>(c.build_orders.size()), "new_game: build order out of range");
        expect(c.build_orders[static_cast<std::size_t>(bos[i])].faction == factions[i],
               "new_game: build order belongs to another faction");
        expect(c.specialized(bos[i], factions[1 - i]), "new_game: build order not specialized for the opponent faction");
    }

    GameState s;
    s.seed = seed;
    s.map = map;
    s.rng = Rng(derive_seed(seed, 0x6a6d));
    for (int i = 0; i < 2; ++i) {
        PlayerState& p = s.players[static_cast<std::size_t>(i)];
        p.faction = factions[i];
        p.build_order = bos[i];
        p.counts.assign(c.units.size(), 0);
        p.damage_pool.assign(c.units.size(), 0.0);
        p.kills.assign(c.units.size(), 0);
        p.upgrades_done.assign(c.upgrades.size(), 0);
        p.counts[static_cast<std::size_t>(faction(c, p.faction).worker_type)] = c.params.start_workers;
        p.minerals = c.params.start_minerals;
        p.used_supply = c.params.start_workers * unit(c, faction(c, p.faction).worker_type).supply;
        p.max_supply = max_supply_for(c, p);
        p.base_hp = c.params.base_hp;
        p.skill = s.rng.uniform(1.0 - c.params.skill_spread, 1.0 + c.params.skill_spread);
    }
    return s;
}

void advance_tick(const Content& c, GameState& s, EventLog* log) {
    expect(!s.terminal(), "advance_tick: game is already over");
    for (auto& p : s.players) std::fill(p.kills.begin(), p.kills.end(), 0);

    for (auto& p : s.players) run_economy(c, s, p);
    for (int i = 0; i < 2; ++i) run_production(c, s, i, log);
    for (int i = 0; i < 2; ++i) run_research(c, s, i, log);
    for (int i = 0; i < 2; ++i) run_movement(c, s, i, log);

    s.engaged = false;
    if (arrived(s.players[0]) || arrived(s.players[1])) resolve_combat(c, s, log);

    s.clock += 1;
    s.outcome = decide(c, s);
    if (log != nullptr) {
        json tick{{"t", s.clock}, {"ev", "tick"}};
        for (int i = 0; i < 2; ++i) {
            const auto& p = s.players[static_cast<std::size_t>(i)];
            tick["p" + std::to_string(i)] = {{"minerals", p.minerals}, {"army", army_value(c, p)},
                                             {"base_hp", p.base_hp},   {"workers", worker_count(c, p)},
                                             {"attacking", p.attacking}};
        }
        log->add(tick.dump());
        if (s.terminal()) emit(log, s, "end", {{"winner", s.outcome == Outcome::P0Win ? 0 : 1}});
    }
}

void resolve_combat(const Content& c, GameState& s, EventLog* log) {
    const double noise = c.params.combat_noise;
    // noise is drawn for both sides every call so the RNG stream does not
    // depend on which branch applies
    const double mult[2] = {s.rng.uniform(1.0 - noise, 1.0 + noise), s.rng.uniform(1.0 - noise, 1.0 + noise)};

    const std::size_t nu = c.units.size();
    std::vector<double> damage[2] = {std::vector<double>(nu, 0.0), std::vector<double>(nu, 0.0)};
    double base_damage[2] = {0.0, 0.0};
    bool fought = false;

    for (int side = 0; side < 2; ++side) {
        const PlayerState& att = s.players[static_cast<std::size_t>(side)];
        const PlayerState& def = s.players[static_cast<std::size_t>(1 - side)];
        if (!arrived(att) && !arrived(def)) continue;
        const auto& att_types = faction(c, att.faction).combat_types;
        const auto& def_types = faction(c, def.faction).combat_types;
        const double atk_mult = attack_multiplier(c, att) * att.skill * mult[side];

        if (has_combat_units(c, def)) {
            double total_hp = 0.0;
            for (int j : def_types) total_hp += def.counts[static_cast<std::size_t>(j)] * unit(c, j).hp;
            for (int i : att_types) {
                const int n = att.counts[static_cast<std::size_t>(i)];
                if (n == 0) continue;
                fought = true;
                for (int j : def_types) {
                    const int m = def.counts[static_cast<std::size_t>(j)];
                    if (m == 0) continue;
                    const double share = m * unit(c, j).hp / total_hp;
                    damage[1 - side][static_cast<std::size_t>(j)] +=
                        n * unit(c, i).attack * atk_mult * c.effectiveness[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * share;
                }
            }
        } else if (arrived(att)) {
            for (int i : att_types) {
                const int n = att.counts[static_cast<std::size_t>(i)];
                base_damage[1 - side] += n * unit(c, i).attack * atk_mult * c.params.kappa_base;
                fought = fought || n > 0;
            }
        }
    }

    // a base under attack fires on the arrived enemy army
    for (int side = 0; side < 2; ++side) {
        const PlayerState& att = s.players[static_cast<std::size_t>(side)];
        if (!arrived(att) || !has_combat_units(c, att) || c.params.base_defense <= 0.0) continue;
        const auto& types = faction(c, att.faction).combat_types;
        double total_hp = 0.0;
        for (int j : types) total_hp += att.counts[static_cast<std::size_t>(j)] * unit(c, j).hp;
        for (int j : types)
            damage[side][static_cast<std::size_t>(j)] +=
                c.params.base_defense * att.counts[static_cast<std::size_t>(j)] * unit(c, j).hp / total_hp;
    }

    for (int side = 0; side < 2; ++side) {
        PlayerState& p = s.players[static_cast<std::size_t>(side)];
        PlayerState& enemy = s.players[static_cast<std::size_t>(1 - side)];
        const double hp_mult = hp_multiplier(c, p);
        for (std::size_t j = 0; j < nu; ++j) {
            if (damage[side][j] <= 0.0) continue;
            auto& pool = p.damage_pool[j];
            pool += damage[side][j];
            const double hp = c.units[j].hp * hp_mult;
            const int killed = std::min(p.counts[j], static_cast<int>(std::floor(pool / hp + 1e-9)));
            pool = std::max(0.0, pool - killed * hp);
            p.counts[j] -= killed;
            p.used_supply -= killed * c.units[j].supply;
            if (p.counts[j] == 0) pool = 0.0;
            enemy.kills[j] += killed;
            if (killed > 0) emit(log, s, "kill", {{"p", 1 - side}, {"unit", c.units[j].name}, {"n", killed}});
        }
        if (base_damage[side] > 0.0) {
            p.base_hp = std::max(0.0, p.base_hp - base_damage[side]);
            emit(log, s, "base_damage", {{"p", side}, {"amount", base_damage[side]}, {"base_hp", p.base_hp}});
        }
    }
    s.engaged = fought;

    for (int side = 0; side < 2; ++side) {
        PlayerState& p = s.players[static_cast<std::size_t>(side)];
        const PlayerState& enemy = s.players[static_cast<std::size_t>(1 - side)];
        if (!arrived(p)) continue;
        const double value = army_value(c, p);
        const double retreat = c.build_orders[static_cast<std::size_t>(p.build_order)].retreat_fraction;
        if (value <= 0.0 || (has_combat_units(c, enemy) && value < retreat * p.attack_start_value)) {
            p.attacking = false;
            p.cooldown = c.params.attack_cooldown;
            emit(log, s, "retreat", {{"p", side}, {"army_value", value}});
        }
    }
}

double scouting_probability(const Content& c, const GameState& s, int player) {
    const PlayerState& p = s.players[static_cast<std::size_t>(player)];
    int mobile = worker_count(c, p);
    for (int t : faction(c, p.faction).combat_types) mobile += p.counts[static_cast<std::size_t>(t)];
    const auto& gp = c.params;
    const double radius = c.maps[static_cast<std::size_t>(s.map)].scout_radius;
    return std::clamp(radius * (gp.scout_base + gp.scout_per_unit * mobile), 0.0, gp.scout_max);
}

RawObservation observe(const Content& c, const GameState& s, int player) {
    expect(player == 0 || player == 1, "observe: player must be 0 or 1");
    const PlayerState& me = s.players[static_cast<std::size_t>(player)];
    const PlayerState& enemy = s.players[static_cast<std::size_t>(1 - player)];

    RawObservation o;
    o.player = player;
    o.clock = s.clock;
    o.own_counts = me.counts;
    o.minerals = me.minerals;
    o.gas = me.gas;
    o.used_supply = me.used_supply;
    o.max_supply = me.max_supply;
    o.upgrades_done = me.upgrades_done;
    o.upgrades_researching.assign(c.upgrades.size(), 0);
    for (const auto& r : me.research) o.upgrades_researching[static_cast<std::size_t>(r.upgrade)] = 1;
    o.enemy_faction = enemy.faction;
    o.map = s.map;
    o.build_order = me.build_order;
    o.enemy_deaths = me.kills;

    Rng rng(derive_seed(s.seed, 0x0b5e, static_cast<std::uint64_t>(s.clock), static_cast<std::uint64_t>(player)));
    const double p_vis = scouting_probability(c, s, player);
    const bool at_enemy_base = arrived(me) && has_combat_units(c, me);
    o.enemy_visible.assign(c.units.size(), 0);
    for (std::size_t j = 0; j < c.units.size(); ++j) {
        const int n = enemy.counts[j];
        if (n == 0) continue;
        const bool engaged_type = s.engaged && c.units[j].role == Role::Combat;
        o.enemy_visible[j] = (engaged_type || at_enemy_base) ? n : rng.binomial(n, p_vis);
    }
    return o;
}

std::vector<int> full_state_counts(const GameState& s, int player) {
    expect(player == 0 || player == 1, "full_state_counts: player must be 0 or 1");
    return s.players[static_cast<std::size_t>(1 - player)].counts;
}

void set_build_order(const Content& c, GameState& s, int player, int build_order, EventLog* log) {
    expect(player == 0 || player == 1, "set_build_order: player must be 0 or 1");
    PlayerState& p = s.players[static_cast<std::size_t>(player)];
    expect(build_order >= 0 && build_order < static_cast<int>(c.build_orders.size()),
           "set_build_order: build order out of range");
    expect(c.build_orders[static_cast<std::size_t>(build_order)].faction == p.faction,
           "set_build_order: build order belongs to another faction");
    expect(c.specialized(build_order, s.players[static_cast<std::size_t>(1 - player)].faction),
           "set_build_order: build order not specialized for the opponent faction");
    emit(log, s, "switch", {{"p", player}, {"from", p.build_order}, {"to", build_order}});
    p.build_order = build_order;
}

Outcome outcome(const GameState& s) { return s.outcome; }

Outcome play_fixed(const Content& c, int map, int faction_p0, int faction_p1, int bo_p0, int bo_p1,
                   std::uint64_t seed, EventLog* log) {
    GameState s = new_game(c, map, faction_p0, faction_p1, bo_p0, bo_p1, seed);
    while (!s.terminal()) advance_tick(c, s, log);
    return s.outcome;
}

}  // namespace bsw::sim
