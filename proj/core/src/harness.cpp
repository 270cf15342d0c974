#include "buildswitch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "buildswitch/config.hpp"
#include "buildswitch/error.hpp"
#include "buildswitch/io.hpp"
#include "buildswitch/rng.hpp"
#include "json.hpp"

namespace bsw::eval {

using json = nlohmann::json;

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

std::vector<int> all_or(const std::vector<int>& chosen, std::size_t n) {
    if (!chosen.empty()) return chosen;
    std::vector<int> out(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
}

struct CellKey {
    int opponent, map, bo;
};

std::vector<CellKey> cell_keys(const EvalConfig& cfg, const sim::Content& content) {
    expect(cfg.games_per_cell >= 1, "EvalConfig: games per cell must be at least 1");
    std::vector<CellKey> keys;
    for (int o : all_or(cfg.opponents, content.opponents.size())) {
        expect(o >= 0 && o < static_cast<int>(content.opponents.size()), "EvalConfig: unknown opponent");
        for (int m : all_or(cfg.maps, content.maps.size())) {
            expect(m >= 0 && m < static_cast<int>(content.maps.size()), "EvalConfig: unknown map");
            for (int bo : content.build_orders_for(content.agent_faction, content.opponents[sz(o)].faction))
                keys.push_back({o, m, bo});
        }
    }
    expect(!keys.empty(), "EvalConfig: no cells to evaluate");
    return keys;
}

template <typename PlayFn>
std::vector<CellResult> run_cells(const EvalConfig& cfg, const sim::Content& content, std::uint64_t seed, PlayFn play) {
    const auto keys = cell_keys(cfg, content);
    std::vector<CellResult> cells(keys.size());
    pipe::parallel_for(keys.size(), cfg.workers, [&](std::size_t i) {
        const CellKey& k = keys[i];
        CellResult& cell = cells[i];
        cell.opponent = k.opponent;
        cell.map = k.map;
        cell.starting_bo = k.bo;
        for (int g = 0; g < cfg.games_per_cell; ++g) {
            const GameResult r = play(eval_meta(content, k.opponent, k.map, k.bo, cell_game_seed(seed, k.opponent, k.map, k.bo, g)));
            cell.wins.push_back(r.win ? 1 : 0);
            cell.switches.push_back(r.switches);
        }
    });
    return cells;
}

PoolSummary pool_summary(const sim::Content& content, const std::vector<CellResult>& cells, int games_per_cell,
                         bool held_out) {
    PoolSummary s;
    std::map<int, std::pair<int, int>> totals;                 // opponent -> (wins, games)
    std::vector<std::map<int, std::pair<int, int>>> per_set(sz(games_per_cell));
    for (const auto& c : cells) {
        if (content.opponents[sz(c.opponent)].held_out != held_out) continue;
        for (std::size_t g = 0; g < c.wins.size(); ++g) {
            totals[c.opponent].first += c.wins[g];
            totals[c.opponent].second += 1;
            per_set[g][c.opponent].first += c.wins[g];
            per_set[g][c.opponent].second += 1;
        }
    }
    if (totals.empty()) return s;
    std::vector<double> rates;
    for (const auto& [o, wg] : totals) {
        rates.push_back(static_cast<double>(wg.first) / wg.second);
        s.games += wg.second;
    }
    s.opponents = static_cast<int>(rates.size());
    s.aggregate = aggregate_rate(rates);
    for (const auto& set : per_set) {
        std::vector<double> r;
        for (const auto& [o, wg] : set) r.push_back(static_cast<double>(wg.first) / wg.second);
        s.set_aggregates.push_back(aggregate_rate(r));
    }
    s.stddev = sample_stddev(s.set_aggregates);
    return s;
}

}  // namespace

double aggregate_rate(const std::vector<double>& rates) {
    if (rates.empty()) return 0.0;
    return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

double sample_stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = aggregate_rate(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

WinRateReport summarize(const sim::Content& content, std::vector<CellResult> cells, int games_per_cell) {
    expect(games_per_cell >= 1, "summarize: games per cell must be at least 1");
    for (const auto& c : cells) {
        expect(c.opponent >= 0 && c.opponent < static_cast<int>(content.opponents.size()), "summarize: unknown opponent");
        expect(c.wins.size() == c.switches.size() && c.wins.size() <= sz(games_per_cell),
               "summarize: a cell holds more games than games_per_cell");
    }
    std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
        return std::tie(a.opponent, a.map, a.starting_bo) < std::tie(b.opponent, b.map, b.starting_bo);
    });
    WinRateReport r;
    std::map<int, OpponentRate> rates;
    for (const auto& c : cells) {
        OpponentRate& o = rates[c.opponent];
        o.opponent = c.opponent;
        o.name = content.opponents[sz(c.opponent)].name;
        o.held_out = content.opponents[sz(c.opponent)].held_out;
        o.games += static_cast<int>(c.wins.size());
        o.wins += std::accumulate(c.wins.begin(), c.wins.end(), 0);
    }
    for (auto& [id, o] : rates) {
        o.rate = o.games > 0 ? static_cast<double>(o.wins) / o.games : 0.0;
        r.per_opponent.push_back(o);
    }
    r.training = pool_summary(content, cells, games_per_cell, false);
    r.held_out = pool_summary(content, cells, games_per_cell, true);
    r.cells = std::move(cells);
    return r;
}

std::uint64_t cell_game_seed(std::uint64_t seed, int opponent, int map, int bo, int g) {
    return derive_seed(seed, 0xe7a1, opponent, map, bo, g);
}

pipe::GameMeta eval_meta(const sim::Content& content, int opponent, int map, int bo, std::uint64_t seed) {
    const auto& opp = content.opponents[sz(opponent)];
    pipe::GameMeta m;
    m.seed = seed;
    m.map = map;
    m.opponent = opp.id;
    m.agent_faction = content.agent_faction;
    m.opponent_faction = opp.faction;
    m.opening_bo = bo;
    m.opponent_bo = opp.build_order;
    return m;
}

namespace {

/// Greedy game; `rows` (optional) receives one trace row per tick.
GameResult greedy_game(const net::ModelParams& params, const sim::Content& content, const pipe::OnPolicySetup& setup,
                       const pipe::GameMeta& meta, std::vector<TraceRow>* rows) {
    sim::GameState state = sim::new_game(content, meta.map, meta.agent_faction, meta.opponent_faction,
                                         meta.opening_bo, meta.opponent_bo, meta.seed);
    net::Controller ctl(params, content, setup.featurizer, setup.selection);
    GameResult res;
    while (!state.terminal()) {
        const sim::RawObservation obs = sim::observe(content, state, 0);
        const net::StepOutput& out = ctl.observe(obs);
        if (rows != nullptr) {
            TraceRow row;
            row.tick = state.clock;
            const auto vis = feat::normalize_counts(obs.enemy_visible, content, setup.featurizer.count_scale);
            const auto tru = feat::normalize_counts(sim::full_state_counts(state, 0), content, setup.featurizer.count_scale);
            row.observed = std::accumulate(vis.begin(), vis.end(), 0.0);
            row.truth = std::accumulate(tru.begin(), tru.end(), 0.0);
            row.predicted = std::accumulate(out.aux_pred.begin(), out.aux_pred.end(), 0.0);
            row.bo = obs.build_order;
            row.q = out.q;
            rows->push_back(std::move(row));
        }
        const int bo = ctl.choose_build_order(obs);
        if (bo != state.players[0].build_order) {
            sim::set_build_order(content, state, 0, bo);
            ++res.switches;
        }
        sim::advance_tick(content, state);
    }
    res.win = sim::outcome(state) == sim::Outcome::P0Win;
    return res;
}

}  // namespace

GameResult play_greedy_game(const net::ModelParams& params, const sim::Content& content,
                            const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta) {
    return greedy_game(params, content, setup, meta, nullptr);
}

GameResult play_control_game(const sim::Content& content, const pipe::GameMeta& meta) {
    GameResult r;
    r.win = sim::play_fixed(content, meta.map, meta.agent_faction, meta.opponent_faction, meta.opening_bo,
                            meta.opponent_bo, meta.seed) == sim::Outcome::P0Win;
    return r;
}

WinRateReport evaluate(const net::ModelParams& params, const EvalConfig& cfg, const sim::Content& content,
                       const pipe::OnPolicySetup& setup, std::uint64_t seed) {
    auto cells = run_cells(cfg, content, seed,
                           [&](const pipe::GameMeta& m) { return play_greedy_game(params, content, setup, m); });
    WinRateReport r = summarize(content, std::move(cells), cfg.games_per_cell);
    r.policy = "model";
    r.seed = seed;
    return r;
}

WinRateReport control_run(const EvalConfig& cfg, const sim::Content& content, std::uint64_t seed) {
    auto cells = run_cells(cfg, content, seed, [&](const pipe::GameMeta& m) { return play_control_game(content, m); });
    WinRateReport r = summarize(content, std::move(cells), cfg.games_per_cell);
    r.policy = "control";
    r.seed = seed;
    return r;
}

std::string report_to_json(const WinRateReport& r) {
    auto pool = [](const PoolSummary& p) {
        return json{{"opponents", p.opponents},
                    {"games", p.games},
                    {"aggregate", p.aggregate},
                    {"set_aggregates", p.set_aggregates},
                    {"stddev", p.stddev}};
    };
    json j;
    j["policy"] = r.policy;
    j["seed"] = r.seed;
    j["training_pool"] = pool(r.training);
    j["held_out"] = pool(r.held_out);
    json per = json::array();
    for (const auto& o : r.per_opponent)
        per.push_back({{"opponent", o.opponent}, {"name", o.name}, {"held_out", o.held_out}, {"games", o.games},
                       {"wins", o.wins}, {"rate", o.rate}});
    j["per_opponent"] = std::move(per);
    json cells = json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"opponent", c.opponent}, {"map", c.map}, {"starting_bo", c.starting_bo}, {"wins", c.wins},
                         {"switches", c.switches}});
    j["cells"] = std::move(cells);
    return j.dump(1) + "\n";
}

// ---------------------------------------------------------------- tournament

TournamentReport tournament(const sim::Content& content, const std::vector<int>& build_orders, int games,
                            std::uint64_t seed, int workers) {
    expect(games >= 1, "tournament: games per pairing must be at least 1");
    expect(build_orders.size() >= 2, "tournament: need at least two build orders");
    TournamentReport t;
    t.seed = seed;
    t.build_orders = build_orders;
    for (std::size_t i = 0; i < build_orders.size(); ++i) {
        for (std::size_t j = i + 1; j < build_orders.size(); ++j) {
            const int a = build_orders[i], b = build_orders[j];
            expect(a >= 0 && b >= 0 && a < static_cast<int>(content.build_orders.size()) &&
                       b < static_cast<int>(content.build_orders.size()) && a != b,
                   "tournament: invalid build order pair");
            const int fa = content.build_orders[sz(a)].faction, fb = content.build_orders[sz(b)].faction;
            expect(content.specialized(a, fb) && content.specialized(b, fa),
                   "tournament: " + content.build_orders[sz(a)].name + " and " + content.build_orders[sz(b)].name +
                       " are not specialized against each other");
            t.pairings.push_back({a, b, games, 0});
        }
    }
    const std::size_t n = t.pairings.size() * sz(games);
    std::vector<std::uint8_t> a_won(n, 0);
    pipe::parallel_for(n, workers, [&](std::size_t k) {
        const Pairing& p = t.pairings[k / sz(games)];
        const int g = static_cast<int>(k % sz(games));
        const int map = g % static_cast<int>(content.maps.size());
        const std::uint64_t game_seed = derive_seed(seed, 0x7041, p.a, p.b, g);
        const int fa = content.build_orders[sz(p.a)].faction, fb = content.build_orders[sz(p.b)].faction;
        if (g % 2 == 0) {
            a_won[k] = sim::play_fixed(content, map, fa, fb, p.a, p.b, game_seed) == sim::Outcome::P0Win;
        } else {
            a_won[k] = sim::play_fixed(content, map, fb, fa, p.b, p.a, game_seed) == sim::Outcome::P1Win;
        }
    });
    for (std::size_t k = 0; k < n; ++k) t.pairings[k / sz(games)].a_wins += a_won[k];
    return t;
}

double win_rate(const TournamentReport& t, int a, int b) {
    for (const auto& p : t.pairings) {
        if (p.a == a && p.b == b) return p.rate();
        if (p.a == b && p.b == a) return 1.0 - p.rate();
    }
    throw ContractError("win_rate: pair not in the tournament");
}

std::optional<Cycle> strongest_cycle(const TournamentReport& t) {
    std::optional<Cycle> best;
    const auto& bos = t.build_orders;
    for (std::size_t i = 0; i < bos.size(); ++i)
        for (std::size_t j = 0; j < bos.size(); ++j)
            for (std::size_t k = 0; k < bos.size(); ++k) {
                // i is the smallest index so each cycle is visited in one rotation per direction
                if (j <= i || k <= i || j == k) continue;
                const double ab = win_rate(t, bos[i], bos[j]), bc = win_rate(t, bos[j], bos[k]),
                             ca = win_rate(t, bos[k], bos[i]);
                if (ab <= 0.5 || bc <= 0.5 || ca <= 0.5) continue;
                const double weakest = std::min({ab, bc, ca});
                if (!best || weakest > best->weakest) best = Cycle{{bos[i], bos[j], bos[k]}, weakest};
            }
    return best;
}

std::string tournament_to_json(const TournamentReport& t, const sim::Content& content) {
    json j;
    j["seed"] = t.seed;
    json names = json::array();
    for (int b : t.build_orders) names.push_back(content.build_orders[sz(b)].name);
    j["build_orders"] = std::move(names);
    json pairs = json::array();
    for (const auto& p : t.pairings)
        pairs.push_back({{"a", content.build_orders[sz(p.a)].name},
                         {"b", content.build_orders[sz(p.b)].name},
                         {"games", p.games},
                         {"a_wins", p.a_wins},
                         {"a_rate", p.rate()}});
    j["pairings"] = std::move(pairs);
    if (const auto c = strongest_cycle(t)) {
        json cyc = json::array();
        for (int b : c->build_orders) cyc.push_back(content.build_orders[sz(b)].name);
        j["strongest_cycle"] = {{"build_orders", cyc}, {"weakest_rate", c->weakest}};
    } else {
        j["strongest_cycle"] = nullptr;
    }
    return j.dump(1) + "\n";
}

// ---------------------------------------------------------------- traces

std::vector<TraceRow> trace_game(const net::ModelParams& params, const sim::Content& content,
                                 const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta) {
    std::vector<TraceRow> rows;
    greedy_game(params, content, setup, meta, &rows);
    return rows;
}

void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << std::setprecision(9);
    out << "tick,observed,predicted,truth,bo_id";
    const std::size_t A = rows.empty() ? 0 : rows.front().q.size();
    for (std::size_t a = 0; a < A; ++a) out << ",q_" << a;
    out << '\n';
    for (const auto& r : rows) {
        out << r.tick << ',' << r.observed << ',' << r.predicted << ',' << r.truth << ',' << r.bo;
        for (double q : r.q) out << ',' << q;
        out << '\n';
    }
    write_file(path, out.str());
}

std::vector<TraceRow> emit_trace(const net::ModelParams& params, const sim::Content& content,
                                 const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta, const std::string& path) {
    auto rows = trace_game(params, content, setup, meta);
    write_trace_csv(rows, path);
    return rows;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    expect(x.size() == y.size(), "pearson: series differ in length");
    if (x.size() < 2) return 0.0;
    const double mx = aggregate_rate(x), my = aggregate_rate(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'B', 'S', 'W', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw IoError("checkpoint is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const std::string& in, std::size_t pos) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

std::string manifest_to_json(const Manifest& m, const net::ModelParams& params) {
    json layout = json::array();
    for (const auto* p : params.list()) layout.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    json j;
    j["schema"] = m.schema;
    j["arch"] = json::parse(to_json(m.arch));
    j["featurizer"] = json::parse(to_json(m.featurizer));
    j["content_hash"] = m.content_hash;
    j["seed_lineage"] = m.seed_lineage;
    j["layout"] = std::move(layout);
    return j.dump();
}

}  // namespace

Manifest make_manifest(const net::ModelParams& params, const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                       std::vector<std::uint64_t> seed_lineage) {
    Manifest m;
    m.arch = params.arch;
    m.featurizer = fcfg;
    m.content_hash = sim::hash_hex(sim::content_hash(content));
    m.seed_lineage = std::move(seed_lineage);
    return m;
}

void save_checkpoint(const net::ModelParams& params, const Manifest& manifest, const std::string& path) {
    expect(manifest.arch == params.arch, "save_checkpoint: manifest architecture differs from the parameters");
    const std::string mj = manifest_to_json(manifest, params);
    std::string out(kMagic, sizeof kMagic);
    put_u64(out, mj.size());
    out += mj;
    put_u64(out, params.num_scalars());
    for (const auto* p : params.list())
        for (double v : p->value.values()) put_f32(out, static_cast<float>(v));
    put_u64(out, fnv1a64(out));
    write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string in = read_file(path);
    if (in.size() < sizeof kMagic + 24 || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0)
        throw IoError("'" + path + "' is not a checkpoint");
    std::size_t pos = sizeof kMagic;
    const std::uint64_t mlen = get_u64(in, pos);
    if (mlen > in.size() - pos) throw IoError("checkpoint is truncated");
    const std::string mj = in.substr(pos, mlen);
    pos += mlen;
    const std::uint64_t n = get_u64(in, pos);
    if (n > (in.size() - pos) / 4 || in.size() - pos != 4 * n + 8) throw IoError("checkpoint is truncated or padded");
    const std::size_t payload = pos;
    pos += 4 * n;
    const std::uint64_t stored = get_u64(in, pos);
    if (stored != fnv1a64(std::string_view(in).substr(0, payload + 4 * n))) throw IoError("checkpoint hash mismatch");

    LoadedCheckpoint out;
    try {
        const json j = json::parse(mj);
        out.manifest.schema = j.at("schema").get<std::string>();
        if (out.manifest.schema != kCheckpointSchema)
            throw IoError("unsupported checkpoint schema '" + out.manifest.schema + "'");
        out.manifest.arch = arch_from_json(j.at("arch").dump());
        out.manifest.featurizer = featurizer_from_json(j.at("featurizer").dump());
        out.manifest.content_hash = j.at("content_hash").get<std::string>();
        out.manifest.seed_lineage = j.at("seed_lineage").get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint manifest: ") + e.what());
    }
    out.params = net::zero_model(out.manifest.arch);
    if (out.params.num_scalars() != n) throw IoError("checkpoint payload does not match its architecture");
    std::size_t k = 0;
    for (auto* p : out.params.list())
        for (double& v : p->value.values()) v = static_cast<double>(get_f32(in, payload + 4 * k++));
    return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const net::ArchConfig& expected_arch,
                                 const sim::Content& content) {
    LoadedCheckpoint c = load_checkpoint(path);
    if (!(c.manifest.arch == expected_arch))
        throw ContractError("checkpoint '" + path + "' was saved with a different architecture (hidden " +
                            std::to_string(c.manifest.arch.hidden) + " vs " + std::to_string(expected_arch.hidden) + ")");
    if (c.manifest.content_hash != sim::hash_hex(sim::content_hash(content)))
        throw ContractError("checkpoint '" + path + "' was trained on different content");
    return c;
}

net::ModelParams round_to_float(const net::ModelParams& params) {
    net::ModelParams out = params;
    for (auto* p : out.list())
        for (double& v : p->value.values()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

}  // namespace bsw::eval
