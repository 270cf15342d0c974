#include "buildswitch/content.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "buildswitch/error.hpp"
#include "buildswitch/rng.hpp"
#include "json.hpp"

namespace bsw::sim {

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::Worker, "worker"}, {Role::Combat, "combat"}, {Role::Building, "building"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UnitTypeDef, id, name, faction, role, hp, attack, mineral_cost,
                                                build_ticks, value, supply, counter_class)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UpgradeDef, id, name, faction, mineral_cost, gas_cost,
                                                research_ticks, attack_mult, hp_mult)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProductionRule, min_tick, min_workers, min_tech, upgrade, target,
                                                count)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BuildOrderScript, id, name, faction, versus, rules, attack_trigger,
                                                retreat_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MapDef, id, name, base_distance, mineral_richness, scout_radius)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FactionDef, id, name, worker_type, tech_type, combat_types)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OpponentDef, id, name, faction, build_order, held_out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GameParams, gather_rate, gas_rate, kappa_base, base_hp,
                                                max_game_ticks, start_workers, start_minerals, worker_saturation,
                                                base_supply, supply_per_tech, supply_cap, army_slots,
                                                army_slots_per_tech, combat_noise, skill_spread, base_defense, attack_cooldown, scout_base,
                                                scout_per_unit, scout_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Content, schema, params, agent_faction, factions, units,
                                                effectiveness, upgrades, build_orders, maps, opponents)

// ---------------------------------------------------------------- queries

std::vector<Action> Content::actions() const {
    std::vector<Action> out;
    for (const auto& bo : build_orders) {
        if (bo.faction != agent_faction) continue;
        for (int f = 0; f < static_cast<int>(factions.size()); ++f)
            if (std::find(bo.versus.begin(), bo.versus.end(), f) != bo.versus.end()) out.push_back({bo.id, f});
    }
    return out;
}

int Content::action_index(int build_order, int versus_faction) const {
    const auto acts = actions();
    for (std::size_t i = 0; i < acts.size(); ++i)
        if (acts[i].build_order == build_order && acts[i].versus_faction == versus_faction) return static_cast<int>(i);
    return -1;
}

std::vector<int> Content::build_orders_for(int faction, int versus) const {
    std::vector<int> out;
    for (const auto& bo : build_orders)
        if (bo.faction == faction && specialized(bo.id, versus)) out.push_back(bo.id);
    return out;
}

bool Content::specialized(int build_order, int versus_faction) const {
    if (build_order < 0 || build_order >= static_cast<int>(build_orders.size())) return false;
    const auto& v = build_orders[static_cast<std::size_t>(build_order)].versus;
    return std::find(v.begin(), v.end(), versus_faction) != v.end();
}

// ---------------------------------------------------------------- builtin

namespace {

struct CombatStats {
    const char* name;
    double hp;
    double attack;
    double cost;
    int build_ticks;
    double value;
    int supply;
};

struct FactionTemplate {
    const char* name;
    const char* worker;
    const char* tech;
    std::array<CombatStats, 3> combat;  // counter classes 0, 1, 2
    const char* weapons;
    const char* armor;
};

// Each faction's combat trio is tuned so that hp * attack / cost^2 is roughly
// constant: equal spending gives equal strength unless a counter applies.
constexpr std::array<FactionTemplate, 3> kFactions{{
    {"swarm", "drone", "nest", {{{"raptor", 40, 4, 25, 3, 50, 1}, {"spitter", 62, 6, 38, 4, 75, 2}, {"crusher", 98, 10, 62, 6, 125, 3}}}, "swarm_claws", "swarm_carapace"},
    {"legion", "acolyte", "forge", {{{"blade", 80, 5, 40, 4, 80, 2}, {"lancer", 100, 8, 57, 5, 110, 2}, {"colossus", 160, 12, 88, 7, 175, 4}}}, "legion_weapons", "legion_shields"},
    {"union", "engineer", "factory", {{{"trooper", 50, 5, 31, 3, 60, 1}, {"gunner", 70, 7, 44, 4, 90, 2}, {"tank", 120, 11, 72, 6, 140, 3}}}, "union_rounds", "union_plating"},
}};

constexpr double kCounterWin = 1.5;
constexpr double kCounterLoss = 0.67;

ProductionRule unit_rule(int target, int count, int min_workers = 0, int min_tech = 0, int min_tick = 0) {
    ProductionRule r;
    r.target = target;
    r.count = count;
    r.min_workers = min_workers;
    r.min_tech = min_tech;
    r.min_tick = min_tick;
    return r;
}

ProductionRule upgrade_rule(int upgrade, int min_tech = 1) {
    ProductionRule r;
    r.upgrade = true;
    r.target = upgrade;
    r.count = 1;
    r.min_tech = min_tech;
    return r;
}

}  // namespace

Content builtin_content() {
    Content c;
    constexpr int kForever = 999;

    for (int f = 0; f < 3; ++f) {
        const auto& tpl = kFactions[static_cast<std::size_t>(f)];
        FactionDef fd;
        fd.id = f;
        fd.name = tpl.name;
        const int base = f * 5;
        fd.worker_type = base;
        fd.combat_types = {base + 1, base + 2, base + 3};
        fd.tech_type = base + 4;
        c.factions.push_back(fd);

        c.units.push_back({base, tpl.worker, f, Role::Worker, 20, 0, 25, 3, 50, 1, -1});
        for (int k = 0; k < 3; ++k) {
            const auto& s = tpl.combat[static_cast<std::size_t>(k)];
            c.units.push_back({base + 1 + k, s.name, f, Role::Combat, s.hp, s.attack, s.cost, s.build_ticks, s.value,
                               s.supply, k});
        }
        c.units.push_back({base + 4, tpl.tech, f, Role::Building, 400, 0, 150, 12, 150, 0, -1});

        c.upgrades.push_back({2 * f, tpl.weapons, f, 100, 100, 24, 1.2, 1.0});
        c.upgrades.push_back({2 * f + 1, tpl.armor, f, 100, 100, 24, 1.0, 1.2});
    }

    const std::size_t n = c.units.size();
    c.effectiveness.assign(n, std::vector<double>(n, 1.0));
    for (const auto& a : c.units) {
        for (const auto& d : c.units) {
            if (a.counter_class < 0 || d.counter_class < 0) continue;
            double e = 1.0;
            if ((a.counter_class + 1) % 3 == d.counter_class) e = kCounterWin;        // A > B > C > A
            else if ((d.counter_class + 1) % 3 == a.counter_class) e = kCounterLoss;
            c.effectiveness[static_cast<std::size_t>(a.id)][static_cast<std::size_t>(d.id)] = e;
        }
    }

    // Eight scripted build orders per faction, same archetypes across factions.
    for (int f = 0; f < 3; ++f) {
        const auto& fd = c.factions[static_cast<std::size_t>(f)];
        const int w = fd.worker_type, t = fd.tech_type;
        const int a = fd.combat_types[0], b = fd.combat_types[1], cc = fd.combat_types[2];
        auto value_of = [&](int type) { return c.units[static_cast<std::size_t>(type)].value; };
        auto add = [&](std::string name, std::vector<int> versus, std::vector<ProductionRule> rules, double trigger,
                       double retreat = 0.4) {
            BuildOrderScript bo;
            bo.id = static_cast<int>(c.build_orders.size());
            bo.name = std::string(fd.name) + "_" + name;
            bo.faction = f;
            bo.versus = std::move(versus);
            bo.rules = std::move(rules);
            bo.attack_trigger = trigger;
            bo.retreat_fraction = retreat;
            c.build_orders.push_back(std::move(bo));
        };
        const int others_lo = (f + 1) % 3, others_hi = (f + 2) % 3;

        add("rush", {0, 1, 2}, {unit_rule(w, 9), unit_rule(a, kForever)}, 6 * value_of(a), 0.3);
        add("mass_a", {0, 1, 2}, {unit_rule(w, 20), unit_rule(a, kForever)}, 36 * value_of(a));
        add("mass_b", {0, 1, 2}, {unit_rule(w, 20), unit_rule(b, kForever)}, 24 * value_of(b));
        add("mass_c", {0, 1, 2}, {unit_rule(w, 20), unit_rule(cc, kForever)}, 15 * value_of(cc));
        add("tech_a", {std::min(others_lo, others_hi), std::max(others_lo, others_hi)},
            {unit_rule(w, 16), unit_rule(t, 1, 16), unit_rule(w, 22), upgrade_rule(2 * f), unit_rule(a, kForever)},
            44 * value_of(a));
        add("tech_c", {std::min(f, others_lo), std::max(f, others_lo)},
            {unit_rule(w, 16), unit_rule(t, 1, 16), unit_rule(w, 22), upgrade_rule(2 * f + 1), unit_rule(cc, kForever)},
            18 * value_of(cc));
        add("macro_b", {std::min(f, others_hi), std::max(f, others_hi)},
            {unit_rule(w, 24), unit_rule(t, 1, 20), unit_rule(b, kForever)}, 32 * value_of(b));
        {
            std::vector<ProductionRule> mix{unit_rule(w, 20)};
            for (int k = 1; k <= 30; ++k) {
                mix.push_back(unit_rule(a, 2 * k));
                mix.push_back(unit_rule(b, k));
            }
            mix.push_back(unit_rule(a, kForever));
            add("mix_ab", {std::min(others_lo, others_hi), std::max(others_lo, others_hi)}, std::move(mix),
                16 * value_of(a) + 8 * value_of(b));
        }
    }

    c.maps = {
        {0, "crossing", 4, 1.0, 1.0},
        {1, "highlands", 7, 0.9, 0.7},
        {2, "delta", 3, 1.1, 1.3},
        {3, "plateau", 5, 1.0, 0.85},
        {4, "narrows", 6, 1.2, 1.1},
    };

    // Scripted opponents; two are held out from training.
    auto opp = [&](int faction, const char* bo_suffix, bool held_out) {
        const std::string full = std::string(kFactions[static_cast<std::size_t>(faction)].name) + "_" + bo_suffix;
        const auto it = std::find_if(c.build_orders.begin(), c.build_orders.end(),
                                     [&](const BuildOrderScript& b) { return b.name == full; });
        OpponentDef o;
        o.id = static_cast<int>(c.opponents.size());
        o.name = full;
        o.faction = faction;
        o.build_order = it->id;
        o.held_out = held_out;
        c.opponents.push_back(o);
    };
    opp(0, "mass_a", false);
    opp(0, "mass_b", false);
    opp(0, "tech_c", false);
    opp(0, "rush", false);
    opp(1, "mass_a", false);
    opp(1, "mass_c", false);
    opp(1, "macro_b", false);
    opp(2, "mass_b", false);
    opp(2, "mass_c", false);
    opp(2, "tech_c", false);
    opp(1, "tech_a", true);
    opp(2, "mix_ab", true);

    validate(c);
    return c;
}

// ---------------------------------------------------------------- validation

void validate(const Content& c) {
    const int nu = static_cast<int>(c.units.size());
    expect(!c.factions.empty(), "content: no factions");
    expect(c.agent_faction >= 0 && c.agent_faction < static_cast<int>(c.factions.size()), "content: bad agent faction");
    for (int i = 0; i < nu; ++i) {
        const auto& u = c.units[static_cast<std::size_t>(i)];
        expect(u.id == i, "content: unit ids must be dense and ordered");
        expect(u.hp > 0 && u.value > 0, "content: unit hp and value must be positive: " + u.name);
        expect(u.attack >= 0 && u.mineral_cost >= 0 && u.build_ticks >= 1, "content: bad unit stats: " + u.name);
        expect(u.role != Role::Worker || u.attack == 0.0, "content: workers may not attack: " + u.name);
        expect((u.role == Role::Combat) == (u.counter_class >= 0), "content: counter class only on combat units");
    }
    expect(static_cast<int>(c.effectiveness.size()) == nu, "content: effectiveness matrix size");
    for (const auto& row : c.effectiveness) {
        expect(static_cast<int>(row.size()) == nu, "content: effectiveness matrix size");
        for (double e : row) expect(std::isfinite(e) && e > 0, "content: effectiveness must be finite and positive");
    }
    for (std::size_t i = 0; i < c.upgrades.size(); ++i)
        expect(c.upgrades[i].id == static_cast<int>(i), "content: upgrade ids must be dense and ordered");
    for (std::size_t i = 0; i < c.build_orders.size(); ++i) {
        const auto& bo = c.build_orders[i];
        expect(bo.id == static_cast<int>(i), "content: build order ids must be dense and ordered");
        expect(!bo.rules.empty(), "content: build order without rules: " + bo.name);
        expect(!bo.versus.empty(), "content: build order without specialization: " + bo.name);
        for (const auto& r : bo.rules) {
            if (r.upgrade) {
                expect(r.target >= 0 && r.target < static_cast<int>(c.upgrades.size()), "content: bad upgrade target");
                expect(c.upgrades[static_cast<std::size_t>(r.target)].faction == bo.faction, "content: foreign upgrade");
            } else {
                expect(r.target >= 0 && r.target < nu, "content: bad unit target");
                expect(c.units[static_cast<std::size_t>(r.target)].faction == bo.faction, "content: foreign unit");
            }
        }
    }
    for (const auto& f : c.factions) {
        if (c.build_orders.empty()) break;
        // every opponent faction leaves the agent at least one action
        expect(!c.build_orders_for(c.agent_faction, f.id).empty(), "content: agent has no build order vs " + f.name);
    }
    expect(!c.maps.empty(), "content: no maps");
    for (std::size_t i = 0; i < c.maps.size(); ++i) {
        expect(c.maps[i].id == static_cast<int>(i), "content: map ids must be dense and ordered");
        expect(c.maps[i].base_distance >= 0 && c.maps[i].mineral_richness > 0 && c.maps[i].scout_radius >= 0,
               "content: bad map parameters");
    }
    for (const auto& o : c.opponents) {
        expect(o.build_order >= 0 && o.build_order < static_cast<int>(c.build_orders.size()), "content: bad opponent");
        expect(c.build_orders[static_cast<std::size_t>(o.build_order)].faction == o.faction, "content: opponent faction");
        expect(c.specialized(o.build_order, c.agent_faction), "content: opponent not specialized vs agent faction");
    }
}

// ---------------------------------------------------------------- serialization

std::string to_json(const Content& content) { return nlohmann::json(content).dump(1); }

Content content_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("content: parse error: ") + e.what());
    }
    Content c;
    try {
        c = j.get<Content>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("content: schema error: ") + e.what());
    }
    if (c.schema != Content{}.schema) throw IoError("content: unsupported schema '" + c.schema + "'");
    validate(c);
    return c;
}

Content load_content(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read content file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return content_from_json(ss.str());
}

void save_content(const Content& content, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write content file: " + path);
    out << to_json(content) << '\n';
}

std::uint64_t content_hash(const Content& content) { return fnv1a64(nlohmann::json(content).dump()); }

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace bsw::sim
