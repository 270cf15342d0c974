#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "buildswitch/error.hpp"
#include "buildswitch/pipeline.hpp"
#include "test_support.hpp"

using namespace bsw;
using namespace bsw::pipe;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("bsw_pipeline_" + name)).string();
}

OffPolicyConfig tiny_corpus_config(int games) {
    OffPolicyConfig cfg;
    cfg.games = games;
    cfg.series_length = 5;
    return cfg;
}

/// First `ticks` frames of a real game with two hand-placed switch points.
PreparedGame short_game(const sim::Content& c, int ticks, double outcome) {
    const auto corpus = generate_corpus(tiny_corpus_config(1), c, 77);
    const GameRecord& r = corpus.front();
    std::vector<sim::RawObservation> obs(r.observations.begin(), r.observations.begin() + ticks);
    PreparedGame g;
    g.frames = feat::featurize_stream(obs, {}, c);
    for (int t = 0; t < ticks; ++t)
        g.targets.push_back(ad::Array::vec(feat::normalize_counts(r.truth[static_cast<std::size_t>(t)], c)));
    const auto valid = c.build_orders_for(0, r.meta.opponent_faction);
    g.points = {{0, c.action_index(valid[0], r.meta.opponent_faction)},
                {ticks - 2, c.action_index(valid[1], r.meta.opponent_faction)}};
    g.outcome = outcome;
    return g;
}

double bce(double p, double y) {
    p = std::clamp(p, 1e-7, 1 - 1e-7);
    return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

double huber_mean(const std::vector<double>& pred, const ad::Array& target, double delta) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = std::abs(pred[i] - target[i]);
        s += d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
    }
    return s / static_cast<double>(pred.size());
}

}  // namespace

TEST(Schedule, PoissonGapsHaveTheRequestedMean) {
    Rng rng(123);
    const auto times = poisson_switch_times(rng, 4.0, 40000.0);
    ASSERT_GT(times.size(), 9000u);
    for (std::size_t i = 1; i < times.size(); ++i) ASSERT_GT(times[i], times[i - 1]);
    EXPECT_LT(times.back(), 40000.0);
    std::vector<double> gaps{times.front()};
    for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    EXPECT_NEAR(mean, 4.0, 0.1);
}

TEST(Schedule, EdgeCases) {
    Rng rng(1);
    EXPECT_TRUE(poisson_switch_times(rng, 4.0, 0.0).empty());
    EXPECT_THROW(poisson_switch_times(rng, 0.0, 10.0), ContractError);
    const std::vector<double> menu{8.0, 10.0, 13.0};
    std::set<double> means;
    for (int i = 0; i < 60; ++i) means.insert(sample_switch_schedule(rng, 40.0, menu).mean_minutes);
    EXPECT_EQ(means, std::set<double>(menu.begin(), menu.end()));
    EXPECT_EQ(switch_tick(0.0), 1);
    EXPECT_EQ(switch_tick(0.01), 1);
    EXPECT_EQ(switch_tick(1.0), 12);
    EXPECT_EQ(switch_tick(1.01), 13);
}

TEST(Bandit, UnplayedFirstThenUcb1) {
    BanditStats stats(25);
    const std::vector<int> openings{3, 5, 7};
    EXPECT_EQ(ucb1_opening(stats, 0, 0, openings), 3);
    stats.record(0, 0, 3, true);
    EXPECT_EQ(ucb1_opening(stats, 0, 0, openings), 5);

    BanditStats s2(25);
    for (int i = 0; i < 4; ++i) s2.record(1, 2, 3, i < 3);  // 3 of 4
    for (int i = 0; i < 6; ++i) s2.record(1, 2, 5, i < 2);  // 2 of 6
    const double score3 = 0.75 + std::sqrt(2 * std::log(10.0) / 4);
    const double score5 = 2.0 / 6 + std::sqrt(2 * std::log(10.0) / 6);
    EXPECT_NEAR(score3, 1.822983, 1e-6);
    EXPECT_NEAR(ucb1_bonus(10, 4), score3 - 0.75, 1e-12);
    ASSERT_GT(score3, score5);
    EXPECT_EQ(ucb1_opening(s2, 1, 2, {3, 5}), 3);
    EXPECT_THROW(ucb1_bonus(10, 0), ContractError);
}

TEST(Bandit, SeriesResets) {
    BanditStats stats(3);
    for (int i = 0; i < 3; ++i) stats.record(0, 1, 2, true);
    EXPECT_TRUE(stats.table(0, 1).arms.empty());
    EXPECT_EQ(stats.table(0, 1).games, 0);
    stats.record(0, 1, 2, false);
    EXPECT_EQ(stats.table(0, 1).arms.at(2).plays, 1);
    EXPECT_TRUE(stats.table(1, 1).arms.empty());  // other cells are independent
}

TEST(RandomSwitchGame, RecordsOpeningAndScheduledSwitches) {
    const auto c = sim::builtin_content();
    const auto& opp = c.opponents[4];
    GameMeta meta{11, 2, opp.id, 0, opp.faction, c.build_orders_for(0, opp.faction)[0], opp.build_order};
    const std::vector<double> times{0.5, 3.0, 7.25};
    const GameRecord r = play_random_switch_game(c, meta, times);
    EXPECT_EQ(r, play_random_switch_game(c, meta, times));
    ASSERT_GE(r.switches.size(), 1u);
    EXPECT_EQ(r.switches[0].source, SwitchSource::Opening);
    EXPECT_EQ(r.switches[0].tick, 0);
    EXPECT_EQ(r.switches[0].previous_bo, -1);
    EXPECT_EQ(r.observations.size(), r.truth.size());
    const std::set<int> due{switch_tick(0.5), switch_tick(3.0), switch_tick(7.25)};
    for (std::size_t i = 1; i < r.switches.size(); ++i) {
        const auto& e = r.switches[i];
        EXPECT_EQ(e.source, SwitchSource::Random);
        EXPECT_TRUE(due.count(e.tick)) << e.tick;
        EXPECT_NE(e.previous_bo, e.new_bo);
        EXPECT_TRUE(c.specialized(e.new_bo, opp.faction));
        EXPECT_EQ(r.observations[static_cast<std::size_t>(e.tick)].build_order, e.previous_bo);
    }
}

TEST(Corpus, DeterministicWorkerIndependentAndMasked) {
    const auto c = sim::builtin_content();
    OffPolicyConfig cfg = tiny_corpus_config(24);
    const auto a = generate_corpus(cfg, c, 5);
    cfg.workers = 3;
    const auto b = generate_corpus(cfg, c, 5);
    ASSERT_EQ(a.size(), 24u);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, generate_corpus(tiny_corpus_config(24), c, 6));
    for (const auto& r : a) {
        EXPECT_FALSE(c.opponents[static_cast<std::size_t>(r.meta.opponent)].held_out);
        EXPECT_EQ(r.meta.agent_faction, c.agent_faction);
        for (const auto& e : r.switches) EXPECT_GE(c.action_index(e.new_bo, r.meta.opponent_faction), 0);
        for (std::size_t t = 0; t < r.observations.size(); ++t) EXPECT_EQ(r.observations[t].clock, static_cast<int>(t));
    }
}

TEST(Corpus, JsonAndFileRoundTrip) {
    const auto c = sim::builtin_content();
    const auto corpus = generate_corpus(tiny_corpus_config(6), c, 9);
    for (const auto& r : corpus) EXPECT_EQ(record_from_json(record_to_json(r)), r);

    const std::string path = temp_path("corpus.jsonl.gz");
    save_corpus(corpus, c, path);
    EXPECT_EQ(load_corpus(path, c), corpus);

    sim::Content other = c;
    other.params.gather_rate = 0.9;
    EXPECT_THROW(load_corpus(path, other), ContractError);
    { std::ofstream(path) << "this is not gzip"; }
    EXPECT_THROW(load_corpus(path, c), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_corpus(path, c), IoError);
    EXPECT_THROW(record_from_json("[1,2"), IoError);
}

TEST(Prepare, OpeningPointIsOptional) {
    const auto c = sim::builtin_content();
    const GameRecord r = generate_corpus(tiny_corpus_config(1), c, 3).front();
    const PreparedGame with = prepare_game(r, {}, c, true);
    const PreparedGame without = prepare_game(r, {}, c, false);
    EXPECT_EQ(with.points.size(), r.switches.size());
    EXPECT_EQ(without.points.size(), r.switches.size() - 1);
    EXPECT_EQ(with.frames.size(), r.observations.size());
    EXPECT_EQ(with.outcome, r.win ? 1.0 : 0.0);
    GameRecord bad = r;
    bad.switches.push_back({3, r.meta.opening_bo, c.build_orders_for(0, (r.meta.opponent_faction + 1) % 3).back(),
                            SwitchSource::Random});
    if (!c.specialized(bad.switches.back().new_bo, r.meta.opponent_faction)) {
        EXPECT_THROW(prepare_game(bad, {}, c, true), ContractError);
    }
}

TEST(Loss, MatchesIndependentForwardPass) {
    const auto c = sim::builtin_content();
    net::ModelParams p = net::init_model(net::arch_for(c, 8, 8), 4);
    const PreparedGame g = short_game(c, 10, 1.0);
    LossConfig cfg;
    cfg.aux_scale = 10.0;
    const LossReport rep = assemble_losses(p, {&g}, cfg, false);

    net::Carry carry = net::zero_carry(p.arch);
    double bce_sum = 0.0, huber_sum = 0.0;
    int wrong = 0;
    for (std::size_t t = 0; t < g.frames.size(); ++t) {
        const auto out = net::encode_step(p, g.frames[t], carry);
        carry = out.carry;
        huber_sum += huber_mean(out.aux_pred, g.targets[t], 1.0);
        for (const auto& pt : g.points) {
            if (pt.tick != static_cast<int>(t)) continue;
            const double q = out.q[static_cast<std::size_t>(pt.action)];
            bce_sum += bce(q, 1.0);
            wrong += q <= 0.5;
        }
    }
    EXPECT_EQ(rep.q_samples, 2);
    EXPECT_EQ(rep.aux_samples, 10);
    EXPECT_NEAR(rep.q_loss, bce_sum / 2, 1e-9);  // averaged over both switch points
    EXPECT_NEAR(rep.aux_loss, huber_sum / 10, 1e-9);
    EXPECT_NEAR(rep.total, rep.q_loss + 10.0 * rep.aux_loss, 1e-12);
    EXPECT_NEAR(rep.q_error_rate, wrong / 2.0, 1e-12);
}

TEST(Loss, WindowsChangeGradientsButNotValues) {
    const auto c = sim::builtin_content();
    net::ModelParams p = net::init_model(net::arch_for(c, 6, 6), 8);
    const PreparedGame g = short_game(c, 9, 0.0);
    auto plist = p.list();
    auto grads_for = [&](int bptt) {
        ad::zero_grads(plist);
        const LossReport r = assemble_losses(p, {&g}, {bptt, 10.0, 1.0}, true);
        std::vector<double> flat;
        for (auto* prm : plist) flat.insert(flat.end(), prm->grad.values().begin(), prm->grad.values().end());
        return std::make_pair(r.total, flat);
    };
    const auto full = grads_for(512);
    const auto three = grads_for(3);
    const auto one = grads_for(1);
    EXPECT_NEAR(full.first, three.first, 1e-12);
    EXPECT_NEAR(full.first, one.first, 1e-12);
    EXPECT_NE(full.second, three.second);
    EXPECT_NE(three.second, one.second);

    // with one window, the gradient is the derivative of the reported total
    grads_for(512);
    const auto fd = testing_support::numeric_grad(
        [&] { return assemble_losses(p, {&g}, {512, 10.0, 1.0}, false).total; }, {&p.lstm_U, &p.q_W, &p.emb_map});
    const std::vector<ad::Parameter*> checked{&p.lstm_U, &p.q_W, &p.emb_map};
    for (std::size_t k = 0; k < checked.size(); ++k)
        for (std::size_t i = 0; i < fd[k].size(); ++i)
            ASSERT_LT(testing_support::rel_err(checked[k]->grad[i], fd[k][i]), 1e-5) << checked[k]->name << "[" << i << "]";
}

TEST(Loss, CarryIsConstantAcrossWindows) {
    // A loss that lives only in the second window cannot move the first
    // window's input-side parameters through the carry.
    const auto c = sim::builtin_content();
    net::ModelParams p = net::init_model(net::arch_for(c, 6, 6), 2);
    PreparedGame g = short_game(c, 6, 1.0);
    g.points = {{4, g.points.back().action}};
    auto plist = p.list();
    ad::zero_grads(plist);
    assemble_losses(p, {&g}, {3, 0.0, 1.0}, true);  // aux off: only the point at tick 4 contributes
    const std::vector<double> windowed(p.emb_map.grad.values().begin(), p.emb_map.grad.values().end());
    ad::zero_grads(plist);
    assemble_losses(p, {&g}, {512, 0.0, 1.0}, true);
    const std::vector<double> unrolled(p.emb_map.grad.values().begin(), p.emb_map.grad.values().end());
    // same map row is used in every frame, so only the window's own steps differ
    EXPECT_NE(windowed, unrolled);
    double wn = 0, un = 0;
    for (double v : windowed) wn += std::abs(v);
    for (double v : unrolled) un += std::abs(v);
    EXPECT_GT(wn, 0.0);
    EXPECT_GT(un, 0.0);
}

TEST(Training, ZeroLearningRateKeepsParameters) {
    const auto c = sim::builtin_content();
    const auto corpus = generate_corpus(tiny_corpus_config(12), c, 4);
    OffPolicyConfig cfg = tiny_corpus_config(12);
    cfg.lr = 0.0;
    cfg.epochs = 1;
    cfg.batch_games = 4;
    cfg.validation_fraction = 0.25;
    const net::ModelParams init = net::init_model(net::arch_for(c, 8, 8), 1);
    const TrainResult res = train_offpolicy(corpus, cfg, {}, c, init, 3);
    EXPECT_EQ(net::params_hash(res.params), net::params_hash(init));
    EXPECT_EQ(res.updates, 3);  // 9 training games in batches of 4
    ASSERT_GE(res.history.size(), 2u);
    EXPECT_EQ(res.history.front().update, 0);
    EXPECT_EQ(res.history.back().update, 3);
}

TEST(Training, DeterministicAndLearns) {
    const auto c = sim::builtin_content();
    const auto corpus = generate_corpus(tiny_corpus_config(16), c, 4);
    OffPolicyConfig cfg = tiny_corpus_config(16);
    cfg.lr = 3e-3;
    cfg.epochs = 3;
    cfg.batch_games = 4;
    cfg.validation_fraction = 0.0;
    const net::ModelParams init = net::init_model(net::arch_for(c, 8, 8), 1);
    const TrainResult a = train_offpolicy(corpus, cfg, {}, c, init, 3);
    const TrainResult b = train_offpolicy(corpus, cfg, {}, c, init, 3);
    EXPECT_EQ(net::params_hash(a.params), net::params_hash(b.params));
    EXPECT_NE(net::params_hash(a.params), net::params_hash(init));
    EXPECT_TRUE(a.params.all_finite());
    std::vector<PreparedGame> games;
    for (const auto& r : corpus) games.push_back(prepare_game(r, {}, c, true));
    net::ModelParams before = init, after = a.params;
    EXPECT_LT(evaluate_losses(after, games, {}).aux_loss, evaluate_losses(before, games, {}).aux_loss);
}

TEST(OnPolicy, HoldsExplorationBetweenTwoAndThirteenMinutes) {
    const auto c = sim::builtin_content();
    const net::ModelParams p = net::init_model(net::arch_for(c, 8, 8), 6);
    RefineConfig cfg;
    OnPolicySetup setup;
    setup.selection.margin = 0.0;  // switch eagerly so the hold is what stops it
    int explored = 0;
    for (std::uint64_t i = 0; i < 30; ++i) {
        const GameMeta meta = sample_onpolicy_meta(c, 12, i);
        EXPECT_FALSE(c.opponents[static_cast<std::size_t>(meta.opponent)].held_out);
        const GameRecord r = run_onpolicy_game(p, c, cfg, setup, meta);
        EXPECT_EQ(r, run_onpolicy_game(p, c, cfg, setup, meta));
        int random_tick = -1;
        for (const auto& e : r.switches) {
            EXPECT_TRUE(c.specialized(e.new_bo, meta.opponent_faction));
            if (e.source == SwitchSource::Random) {
                EXPECT_EQ(random_tick, -1) << "one exploration event per game";
                random_tick = e.tick;
                ++explored;
            } else if (e.source == SwitchSource::Greedy && random_tick >= 0) {
                EXPECT_GE(e.tick - random_tick, 2 * sim::kTicksPerMinute);
            }
        }
    }
    EXPECT_GT(explored, 10);

    cfg.hold_min_minutes = 5;
    cfg.hold_max_minutes = 4;
    EXPECT_THROW(run_onpolicy_game(p, c, cfg, setup, sample_onpolicy_meta(c, 12, 0)), ContractError);
}

TEST(OnPolicy, ZeroUpdatesIsIdentity) {
    const auto c = sim::builtin_content();
    const net::ModelParams p = net::init_model(net::arch_for(c, 8, 8), 6);
    RefineConfig cfg;
    cfg.updates = 0;
    const RefineResult r = refine_onpolicy(p, c, cfg, {}, {}, 1);
    EXPECT_EQ(net::params_hash(r.params), net::params_hash(p));
    EXPECT_TRUE(r.history.empty());

    cfg.updates = 1;
    cfg.batch_games = 2;
    cfg.lr = 1e-3;
    const RefineResult one = refine_onpolicy(p, c, cfg, {}, {}, 1);
    EXPECT_NE(net::params_hash(one.params), net::params_hash(p));
    EXPECT_EQ(one.history.size(), 1u);
}

TEST(Parallel, RethrowsWorkerExceptions) {
    std::vector<int> out(10, 0);
    parallel_for(out.size(), 3, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i) * 2);
    EXPECT_THROW(parallel_for(5, 2, [](std::size_t i) {
                     if (i == 3) throw ContractError("boom");
                 }),
                 ContractError);
}
