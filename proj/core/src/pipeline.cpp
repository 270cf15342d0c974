#include "buildswitch/pipeline.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "buildswitch/error.hpp"
#include "json.hpp"

namespace bsw::pipe {

using json = nlohmann::json;

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

std::vector<int> training_pool(const sim::Content& content) {
    std::vector<int> pool;
    for (const auto& o : content.opponents)
        if (!o.held_out) pool.push_back(o.id);
    expect(!pool.empty(), "content has no training-pool opponents");
    return pool;
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

int random_other_bo(const sim::Content& content, const GameMeta& meta, int current, Rng& rng) {
    std::vector<int> options;
    for (int bo : content.build_orders_for(meta.agent_faction, meta.opponent_faction))
        if (bo != current) options.push_back(bo);
    if (options.empty()) return current;
    return options[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
}

sim::GameState start(const sim::Content& content, const GameMeta& meta) {
    return sim::new_game(content, meta.map, meta.agent_faction, meta.opponent_faction, meta.opening_bo,
                         meta.opponent_bo, meta.seed);
}

GameMeta meta_for_opponent(const sim::Content& content, int opponent, int map, int opening, std::uint64_t seed) {
    const auto& opp = content.opponents[sz(opponent)];
    GameMeta m;
    m.seed = seed;
    m.map = map;
    m.opponent = opp.id;
    m.agent_faction = content.agent_faction;
    m.opponent_faction = opp.faction;
    m.opening_bo = opening;
    m.opponent_bo = opp.build_order;
    return m;
}

}  // namespace

// ---------------------------------------------------------------- bandit

const BanditStats::Table& BanditStats::table(int opponent, int map) {
    Table& t = tables_[{opponent, map}];
    if (t.games >= series_length_) t = Table{};
    return t;
}

void BanditStats::record(int opponent, int map, int bo, bool win) {
    table(opponent, map);  // rolls over a finished series
    Table& t = tables_[{opponent, map}];
    Arm& a = t.arms[bo];
    ++a.plays;
    if (win) ++a.wins;
    ++t.games;
}

double ucb1_bonus(int total_plays, int arm_plays) {
    expect(arm_plays > 0 && total_plays >= arm_plays, "ucb1_bonus: arm must have been played");
    return std::sqrt(2.0 * std::log(static_cast<double>(total_plays)) / arm_plays);
}

int ucb1_opening(BanditStats& stats, int opponent, int map, const std::vector<int>& openings) {
    expect(!openings.empty(), "ucb1_opening: no valid openings");
    const auto& t = stats.table(opponent, map);
    int total = 0;
    for (int bo : openings) {
        auto it = t.arms.find(bo);
        if (it == t.arms.end() || it->second.plays == 0) return bo;
        total += it->second.plays;
    }
    int best = openings.front();
    double best_score = -1.0;
    for (int bo : openings) {
        const auto& arm = t.arms.at(bo);
        const double score = static_cast<double>(arm.wins) / arm.plays + ucb1_bonus(total, arm.plays);
        if (score > best_score) {
            best_score = score;
            best = bo;
        }
    }
    return best;
}

// ---------------------------------------------------------------- schedules

std::vector<double> poisson_switch_times(Rng& rng, double mean_minutes, double cap_minutes) {
    expect(mean_minutes > 0.0, "switch schedule: mean interval must be positive");
    std::vector<double> times;
    double t = 0.0;
    while (true) {
        t += rng.exponential(1.0 / mean_minutes);
        if (t >= cap_minutes) break;
        times.push_back(t);
    }
    return times;
}

SwitchSchedule sample_switch_schedule(Rng& rng, double cap_minutes, const std::vector<double>& interval_menu) {
    expect(!interval_menu.empty(), "switch schedule: interval menu is empty");
    SwitchSchedule s;
    s.mean_minutes =
        interval_menu[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(interval_menu.size()) - 1))];
    s.times = poisson_switch_times(rng, s.mean_minutes, cap_minutes);
    return s;
}

int switch_tick(double minutes) { return std::max(1, static_cast<int>(std::ceil(minutes * sim::kTicksPerMinute))); }

// ---------------------------------------------------------------- corpus

GameRecord play_random_switch_game(const sim::Content& content, const GameMeta& meta,
                                   const std::vector<double>& switch_minutes) {
    sim::GameState state = start(content, meta);
    Rng pick(derive_seed(meta.seed, 0x5d));
    std::vector<int> ticks;
    for (double m : switch_minutes) ticks.push_back(switch_tick(m));

    GameRecord rec;
    rec.meta = meta;
    rec.switches.push_back({0, -1, meta.opening_bo, SwitchSource::Opening});
    std::size_t next = 0;
    while (!state.terminal()) {
        rec.observations.push_back(sim::observe(content, state, 0));
        rec.truth.push_back(sim::full_state_counts(state, 0));
        bool due = false;
        while (next < ticks.size() && ticks[next] <= state.clock) {
            due = true;
            ++next;
        }
        if (due) {
            const int current = state.players[0].build_order;
            const int bo = random_other_bo(content, meta, current, pick);
            if (bo != current) {
                sim::set_build_order(content, state, 0, bo);
                rec.switches.push_back({state.clock, current, bo, SwitchSource::Random});
            }
        }
        sim::advance_tick(content, state);
    }
    rec.win = sim::outcome(state) == sim::Outcome::P0Win;
    return rec;
}

std::vector<GameRecord> generate_corpus(const OffPolicyConfig& cfg, const sim::Content& content,
                                        std::uint64_t base_seed) {
    expect(cfg.games >= 0 && cfg.series_length >= 1, "generate_corpus: invalid game or series count");
    expect(!cfg.interval_menu.empty(), "generate_corpus: interval menu is empty");
    validate(content);
    const auto pool = training_pool(content);
    const double cap_minutes = static_cast<double>(content.params.max_game_ticks) / sim::kTicksPerMinute;
    const std::size_t series = (sz(cfg.games) + sz(cfg.series_length) - 1) / sz(cfg.series_length);

    std::vector<GameRecord> corpus(sz(cfg.games));
    parallel_for(series, cfg.workers, [&](std::size_t s) {
        Rng rng(derive_seed(base_seed, 0xc0, s));
        const int opponent = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
        const int map = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(content.maps.size()) - 1));
        const auto& opp = content.opponents[sz(opponent)];
        const auto openings = content.build_orders_for(content.agent_faction, opp.faction);
        BanditStats bandit(cfg.series_length);
        for (std::size_t g = 0; g < sz(cfg.series_length); ++g) {
            const std::size_t index = s * sz(cfg.series_length) + g;
            if (index >= corpus.size()) break;
            const std::uint64_t seed = derive_seed(base_seed, s, g);
            const int opening = ucb1_opening(bandit, opponent, map, openings);
            Rng sched_rng(derive_seed(seed, 0x5c));
            const auto schedule = sample_switch_schedule(sched_rng, cap_minutes, cfg.interval_menu);
            corpus[index] = play_random_switch_game(content, meta_for_opponent(content, opponent, map, opening, seed),
                                                    schedule.times);
            bandit.record(opponent, map, opening, corpus[index].win);
        }
    });
    return corpus;
}

std::string to_string(SwitchSource s) {
    switch (s) {
        case SwitchSource::Random: return "random";
        case SwitchSource::Greedy: return "greedy";
        case SwitchSource::Opening: return "opening";
    }
    return "random";
}

SwitchSource switch_source_from_string(const std::string& s) {
    if (s == "random") return SwitchSource::Random;
    if (s == "greedy") return SwitchSource::Greedy;
    if (s == "opening") return SwitchSource::Opening;
    throw IoError("unknown switch source '" + s + "'");
}

std::string record_to_json(const GameRecord& r) {
    json j;
    j["meta"] = {{"seed", r.meta.seed},
                 {"map", r.meta.map},
                 {"opponent", r.meta.opponent},
                 {"agent_faction", r.meta.agent_faction},
                 {"opponent_faction", r.meta.opponent_faction},
                 {"opening_bo", r.meta.opening_bo},
                 {"opponent_bo", r.meta.opponent_bo}};
    j["win"] = r.win;
    json sw = json::array();
    for (const auto& e : r.switches) sw.push_back({e.tick, e.previous_bo, e.new_bo, to_string(e.source)});
    j["switches"] = std::move(sw);
    json obs = json::array();
    for (const auto& o : r.observations) {
        obs.push_back({o.clock, o.own_counts, o.minerals, o.gas, o.used_supply, o.max_supply, o.upgrades_done,
                       o.upgrades_researching, o.enemy_visible, o.enemy_deaths, o.build_order});
    }
    j["obs"] = std::move(obs);
    j["truth"] = r.truth;
    return j.dump();
}

GameRecord record_from_json(const std::string& line) {
    try {
        const json j = json::parse(line);
        GameRecord r;
        const auto& m = j.at("meta");
        r.meta.seed = m.at("seed").get<std::uint64_t>();
        r.meta.map = m.at("map").get<int>();
        r.meta.opponent = m.at("opponent").get<int>();
        r.meta.agent_faction = m.at("agent_faction").get<int>();
        r.meta.opponent_faction = m.at("opponent_faction").get<int>();
        r.meta.opening_bo = m.at("opening_bo").get<int>();
        r.meta.opponent_bo = m.at("opponent_bo").get<int>();
        r.win = j.at("win").get<bool>();
        for (const auto& e : j.at("switches")) {
            r.switches.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>(),
                                  switch_source_from_string(e.at(3).get<std::string>())});
        }
        for (const auto& o : j.at("obs")) {
            sim::RawObservation ob;
            ob.player = 0;
            ob.clock = o.at(0).get<int>();
            ob.own_counts = o.at(1).get<std::vector<int>>();
            ob.minerals = o.at(2).get<double>();
            ob.gas = o.at(3).get<double>();
            ob.used_supply = o.at(4).get<int>();
            ob.max_supply = o.at(5).get<int>();
            ob.upgrades_done = o.at(6).get<std::vector<std::uint8_t>>();
            ob.upgrades_researching = o.at(7).get<std::vector<std::uint8_t>>();
            ob.enemy_visible = o.at(8).get<std::vector<int>>();
            ob.enemy_deaths = o.at(9).get<std::vector<int>>();
            ob.build_order = o.at(10).get<int>();
            ob.enemy_faction = r.meta.opponent_faction;
            ob.map = r.meta.map;
            r.observations.push_back(std::move(ob));
        }
        r.truth = j.at("truth").get<std::vector<std::vector<int>>>();
        if (r.truth.size() != r.observations.size()) throw IoError("corpus record: truth and observation lengths differ");
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("corpus record: ") + e.what());
    }
}

void save_corpus(const std::vector<GameRecord>& corpus, const sim::Content& content, const std::string& path) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) throw IoError("cannot open '" + path + "' for writing");
    const json header = {{"schema", kCorpusSchema},
                         {"content_hash", sim::hash_hex(sim::content_hash(content))},
                         {"games", corpus.size()}};
    auto write_line = [&](const std::string& s) {
        const std::string line = s + "\n";
        if (gzwrite(f, line.data(), static_cast<unsigned>(line.size())) != static_cast<int>(line.size())) {
            gzclose(f);
            throw IoError("write failed for '" + path + "'");
        }
    };
    write_line(header.dump());
    for (const auto& r : corpus) write_line(record_to_json(r));
    if (gzclose(f) != Z_OK) throw IoError("close failed for '" + path + "'");
}

std::vector<GameRecord> load_corpus(const std::string& path, const sim::Content& content) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open '" + path + "'");
    std::string text;
    std::vector<char> buf(1 << 16);
    while (true) {
        const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            gzclose(f);
            throw IoError("corrupt corpus '" + path + "'");
        }
        if (n == 0) break;
        text.append(buf.data(), static_cast<std::size_t>(n));
    }
    gzclose(f);

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) throw IoError("corpus '" + path + "' is truncated");
        lines.push_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    if (lines.empty()) throw IoError("corpus '" + path + "' is empty");
    json header;
    try {
        header = json::parse(lines[0]);
    } catch (const json::exception& e) {
        throw IoError("corpus header: " + std::string(e.what()));
    }
    if (header.value("schema", "") != kCorpusSchema) throw IoError("corpus '" + path + "' has an unknown schema");
    if (header.value("content_hash", "") != sim::hash_hex(sim::content_hash(content)))
        throw ContractError("corpus '" + path + "' was generated from different content");
    if (header.value("games", std::size_t{0}) != lines.size() - 1)
        throw IoError("corpus '" + path + "' record count does not match its header");
    std::vector<GameRecord> out;
    out.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) out.push_back(record_from_json(lines[i]));
    return out;
}

// ---------------------------------------------------------------- losses

PreparedGame prepare_game(const GameRecord& r, const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                          bool train_on_opening) {
    PreparedGame g;
    g.frames = feat::featurize_stream(r.observations, fcfg, content);
    g.targets.reserve(r.truth.size());
    for (const auto& t : r.truth) g.targets.push_back(ad::Array::vec(feat::normalize_counts(t, content, fcfg.count_scale)));
    for (const auto& e : r.switches) {
        if (e.source == SwitchSource::Opening && !train_on_opening) continue;
        const int a = content.action_index(e.new_bo, r.meta.opponent_faction);
        expect(a >= 0, "prepare_game: switch outside the specialization mask");
        expect(e.tick >= 0 && e.tick < static_cast<int>(g.frames.size()), "prepare_game: switch tick outside the game");
        g.points.push_back({e.tick, a});
    }
    std::stable_sort(g.points.begin(), g.points.end(),
                     [](const SwitchPoint& a, const SwitchPoint& b) { return a.tick < b.tick; });
    g.outcome = r.win ? 1.0 : 0.0;
    return g;
}

LossReport assemble_losses(net::ModelParams& params, const std::vector<const PreparedGame*>& batch,
                           const LossConfig& cfg, bool accumulate) {
    expect(!batch.empty(), "assemble_losses: empty batch");
    expect(cfg.bptt >= 1, "assemble_losses: BPTT window must be at least 1");
    LossReport rep;
    for (const auto* g : batch) {
        expect(g->frames.size() == g->targets.size(), "assemble_losses: frames and targets differ in length");
        rep.q_samples += static_cast<int>(g->points.size());
        rep.aux_samples += static_cast<int>(g->frames.size());
    }
    const double q_weight = rep.q_samples > 0 ? 1.0 / rep.q_samples : 0.0;
    const double aux_weight = rep.aux_samples > 0 ? cfg.aux_scale / rep.aux_samples : 0.0;
    const std::size_t H = sz(params.arch.hidden);

    double bce_sum = 0.0, huber_sum = 0.0;
    int errors = 0;
    for (const auto* g : batch) {
        std::vector<double> h(H, 0.0), c(H, 0.0);
        std::size_t point = 0;
        for (std::size_t w0 = 0; w0 < g->frames.size(); w0 += sz(cfg.bptt)) {
            const std::size_t w1 = std::min(g->frames.size(), w0 + sz(cfg.bptt));
            ad::Tape tape;
            // the carry enters each window as a constant: no gradient crosses windows
            ad::Var hv = tape.constant(ad::Array::vec(h));
            ad::Var cv = tape.constant(ad::Array::vec(c));
            std::vector<ad::Var> bce_terms, huber_terms;
            for (std::size_t t = w0; t < w1; ++t) {
                const net::StepVars s = net::encode_step(tape, params, g->frames[t], hv, cv);
                hv = s.h;
                cv = s.c;
                huber_terms.push_back(ad::huber_loss(s.aux, g->targets[t], cfg.aux_delta));
                huber_sum += huber_terms.back().value()[0];
                for (; point < g->points.size() && g->points[point].tick == static_cast<int>(t); ++point) {
                    const ad::Var qa = ad::select(s.q, sz(g->points[point].action));
                    bce_terms.push_back(ad::bce_loss(qa, g->outcome));
                    bce_sum += bce_terms.back().value()[0];
                    if ((qa.value()[0] > 0.5) != (g->outcome > 0.5)) ++errors;
                }
            }
            if (accumulate) {
                ad::Var loss = ad::scale(ad::sum(huber_terms), aux_weight);
                if (!bce_terms.empty()) loss = ad::add(loss, ad::scale(ad::sum(bce_terms), q_weight));
                tape.backward(loss);
            }
            h.assign(hv.value().values().begin(), hv.value().values().end());
            c.assign(cv.value().values().begin(), cv.value().values().end());
        }
    }
    rep.q_loss = rep.q_samples > 0 ? bce_sum / rep.q_samples : 0.0;
    rep.aux_loss = rep.aux_samples > 0 ? huber_sum / rep.aux_samples : 0.0;
    rep.total = rep.q_loss + cfg.aux_scale * rep.aux_loss;
    rep.q_error_rate = rep.q_samples > 0 ? static_cast<double>(errors) / rep.q_samples : 0.0;
    return rep;
}

LossReport evaluate_losses(net::ModelParams& params, const std::vector<PreparedGame>& games, const LossConfig& cfg) {
    std::vector<const PreparedGame*> batch;
    for (const auto& g : games) batch.push_back(&g);
    return assemble_losses(params, batch, cfg, false);
}

// ---------------------------------------------------------------- off-policy training

namespace {

struct RunningLoss {
    double q = 0, aux = 0, total = 0, err = 0;
    int q_n = 0, aux_n = 0;

    void add(const LossReport& r) {
        q += r.q_loss * r.q_samples;
        err += r.q_error_rate * r.q_samples;
        aux += r.aux_loss * r.aux_samples;
        q_n += r.q_samples;
        aux_n += r.aux_samples;
    }
    LossReport mean(double aux_scale) const {
        LossReport r;
        r.q_samples = q_n;
        r.aux_samples = aux_n;
        r.q_loss = q_n > 0 ? q / q_n : 0.0;
        r.q_error_rate = q_n > 0 ? err / q_n : 0.0;
        r.aux_loss = aux_n > 0 ? aux / aux_n : 0.0;
        r.total = r.q_loss + aux_scale * r.aux_loss;
        return r;
    }
};

}  // namespace

TrainResult train_offpolicy(const std::vector<GameRecord>& corpus, const OffPolicyConfig& cfg,
                            const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                            net::ModelParams init, std::uint64_t seed, const ProgressFn& progress) {
    expect(!corpus.empty(), "train_offpolicy: empty corpus");
    expect(cfg.epochs >= 0 && cfg.batch_games >= 1 && cfg.eval_every >= 1, "train_offpolicy: invalid schedule");
    expect(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0,
           "train_offpolicy: validation fraction must be in [0, 1)");
    const LossConfig loss_cfg{cfg.bptt, cfg.aux_scale, cfg.aux_delta};

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(derive_seed(seed, 0x5b11));
    shuffle_in_place(order, split_rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(corpus.size())));
    if (cfg.validation_fraction > 0.0 && n_val == 0 && corpus.size() > 1) n_val = 1;
    std::vector<PreparedGame> val;
    for (std::size_t i = 0; i < n_val; ++i) val.push_back(prepare_game(corpus[order[i]], fcfg, content, cfg.train_on_opening));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    TrainResult res;
    res.params = std::move(init);
    auto plist = res.params.list();
    ad::AdamState adam(plist, {cfg.lr, 0.9, 0.999, 1e-8});

    auto checkpoint = [&](double epoch, const RunningLoss& running) {
        MetricPoint mp;
        mp.update = res.updates;
        mp.epoch = epoch;
        mp.train = running.mean(cfg.aux_scale);
        if (!val.empty()) mp.validation = evaluate_losses(res.params, val, loss_cfg);
        res.history.push_back(mp);
        if (progress) progress(mp);
    };
    checkpoint(0.0, RunningLoss{});

    const std::size_t per_epoch = (train.size() + sz(cfg.batch_games) - 1) / sz(cfg.batch_games);
    RunningLoss running;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, 0xe90c, epoch));
        shuffle_in_place(train, shuffle_rng);
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t lo = b * sz(cfg.batch_games);
            const std::size_t hi = std::min(train.size(), lo + sz(cfg.batch_games));
            std::vector<PreparedGame> games;
            games.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i)
                games.push_back(prepare_game(corpus[train[i]], fcfg, content, cfg.train_on_opening));
            std::vector<const PreparedGame*> batch;
            for (const auto& g : games) batch.push_back(&g);

            ad::zero_grads(plist);
            running.add(assemble_losses(res.params, batch, loss_cfg, true));
            ad::adam_step(plist, adam);
            ++res.updates;
            if (res.updates % cfg.eval_every == 0) {
                checkpoint(epoch + static_cast<double>(b + 1) / static_cast<double>(per_epoch), running);
                running = RunningLoss{};
            }
        }
    }
    if (res.history.back().update != res.updates) checkpoint(cfg.epochs, running);
    ad::zero_grads(plist);
    return res;
}

// ---------------------------------------------------------------- on-policy refinement

GameMeta sample_onpolicy_meta(const sim::Content& content, std::uint64_t seed, std::uint64_t index) {
    const auto pool = training_pool(content);
    Rng rng(derive_seed(seed, 0x0f, index));
    const int opponent = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    const int map = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(content.maps.size()) - 1));
    const auto openings = content.build_orders_for(content.agent_faction, content.opponents[sz(opponent)].faction);
    const int opening = openings[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(openings.size()) - 1))];
    return meta_for_opponent(content, opponent, map, opening, derive_seed(seed, 0x0e, index));
}

GameRecord run_onpolicy_game(const net::ModelParams& params, const sim::Content& content, const RefineConfig& cfg,
                             const OnPolicySetup& setup, const GameMeta& meta) {
    expect(!cfg.interval_menu.empty(), "run_onpolicy_game: interval menu is empty");
    expect(cfg.hold_min_minutes >= 0 && cfg.hold_max_minutes >= cfg.hold_min_minutes,
           "run_onpolicy_game: invalid hold range");
    sim::GameState state = start(content, meta);
    Rng rng(derive_seed(meta.seed, 0x7e));
    const double mean = cfg.interval_menu[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(cfg.interval_menu.size()) - 1))];
    const int explore_tick = switch_tick(rng.exponential(1.0 / mean));
    const int hold_ticks = static_cast<int>(rng.uniform_int(cfg.hold_min_minutes, cfg.hold_max_minutes)) *
                           sim::kTicksPerMinute;

    GameRecord rec;
    rec.meta = meta;
    rec.switches.push_back({0, -1, meta.opening_bo, SwitchSource::Opening});
    net::Controller ctl(params, content, setup.featurizer, setup.selection);
    int hold_until = -1;
    while (!state.terminal()) {
        const sim::RawObservation obs = sim::observe(content, state, 0);
        rec.observations.push_back(obs);
        rec.truth.push_back(sim::full_state_counts(state, 0));
        ctl.observe(obs);
        const int current = state.players[0].build_order;
        if (state.clock == explore_tick) {
            const int bo = random_other_bo(content, meta, current, rng);
            if (bo != current) {
                sim::set_build_order(content, state, 0, bo);
                rec.switches.push_back({state.clock, current, bo, SwitchSource::Random});
            }
            hold_until = state.clock + hold_ticks;
        } else if (state.clock >= hold_until) {
            const int bo = ctl.choose_build_order(obs);
            if (bo != current) {
                sim::set_build_order(content, state, 0, bo);
                rec.switches.push_back({state.clock, current, bo, SwitchSource::Greedy});
            }
        }
        sim::advance_tick(content, state);
    }
    rec.win = sim::outcome(state) == sim::Outcome::P0Win;
    return rec;
}

RefineResult refine_onpolicy(net::ModelParams params, const sim::Content& content, const RefineConfig& cfg,
                             const OnPolicySetup& setup, const LossConfig& loss_cfg, std::uint64_t seed,
                             bool train_on_opening) {
    expect(cfg.updates >= 0 && cfg.batch_games >= 1, "refine_onpolicy: invalid schedule");
    RefineResult res;
    res.params = std::move(params);
    auto plist = res.params.list();
    ad::AdamState adam(plist, {cfg.lr, 0.9, 0.999, 1e-8});
    for (int u = 0; u < cfg.updates; ++u) {
        std::vector<GameRecord> records(sz(cfg.batch_games));
        parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
            const auto index = static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(cfg.batch_games) + i;
            records[i] = run_onpolicy_game(res.params, content, cfg, setup, sample_onpolicy_meta(content, seed, index));
        });
        std::vector<PreparedGame> games;
        for (const auto& r : records) games.push_back(prepare_game(r, setup.featurizer, content, train_on_opening));
        std::vector<const PreparedGame*> batch;
        for (const auto& g : games) batch.push_back(&g);
        ad::zero_grads(plist);
        res.history.push_back(assemble_losses(res.params, batch, loss_cfg, true));
        ad::adam_step(plist, adam);
    }
    ad::zero_grads(plist);
    return res;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t t = 0; t < w; ++t) {
        threads.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += w) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace bsw::pipe
