#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "buildswitch/error.hpp"
#include "buildswitch/harness.hpp"
#include "buildswitch/io.hpp"

using namespace bsw;
using namespace bsw::eval;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("bsw_harness_" + name)).string();
}

EvalConfig small_eval() {
    EvalConfig cfg;
    cfg.opponents = {0, 10};
    cfg.maps = {0, 3};
    cfg.games_per_cell = 2;
    return cfg;
}

}  // namespace

TEST(Aggregate, UnweightedMeanAndSampleStd) {
    EXPECT_DOUBLE_EQ(aggregate_rate({1.0, 0.5}), 0.75);
    EXPECT_NEAR(sample_stddev({1, 2, 3, 4}), 1.2909944487358056, 1e-12);
    EXPECT_EQ(sample_stddev({0.3}), 0.0);
}

TEST(Aggregate, SummaryFromCells) {
    const auto c = sim::builtin_content();
    // opponent 0: 3 of 4 wins; opponent 1: 1 of 4; opponent 10 (held out): 2 of 2
    std::vector<CellResult> cells{
        {1, 0, 1, {0, 1}, {0, 0}}, {0, 0, 1, {1, 1}, {2, 1}}, {0, 1, 1, {0, 1}, {0, 0}},
        {1, 1, 1, {0, 0}, {0, 0}}, {10, 0, 4, {1, 1}, {1, 1}},
    };
    const WinRateReport r = summarize(c, cells, 2);
    ASSERT_EQ(r.per_opponent.size(), 3u);
    EXPECT_DOUBLE_EQ(r.per_opponent[0].rate, 0.75);
    EXPECT_DOUBLE_EQ(r.per_opponent[1].rate, 0.25);
    EXPECT_TRUE(r.per_opponent[2].held_out);
    EXPECT_DOUBLE_EQ(r.training.aggregate, 0.5);
    EXPECT_EQ(r.training.opponents, 2);
    EXPECT_EQ(r.training.games, 8);
    EXPECT_DOUBLE_EQ(r.held_out.aggregate, 1.0);
    // replicate set 0: opp0 1/2, opp1 0/2 -> 0.25; set 1: opp0 2/2, opp1 1/2 -> 0.75
    ASSERT_EQ(r.training.set_aggregates.size(), 2u);
    EXPECT_DOUBLE_EQ(r.training.set_aggregates[0], 0.25);
    EXPECT_DOUBLE_EQ(r.training.set_aggregates[1], 0.75);
    EXPECT_NEAR(r.training.stddev, sample_stddev({0.25, 0.75}), 1e-15);
    EXPECT_EQ(r.cells.front().opponent, 0);  // sorted by key

    EXPECT_THROW(summarize(c, cells, 1), ContractError);
    EXPECT_THROW(summarize(c, {{99, 0, 0, {1}, {0}}}, 1), ContractError);
}

TEST(Evaluate, DeterministicPairedAndWorkerIndependent) {
    const auto c = sim::builtin_content();
    const auto p = net::init_model(net::arch_for(c, 8, 8), 3);
    EvalConfig cfg = small_eval();
    const WinRateReport a = evaluate(p, cfg, c, {}, 21);
    cfg.workers = 2;
    const WinRateReport b = evaluate(p, cfg, c, {}, 21);
    EXPECT_EQ(report_to_json(a), report_to_json(b));
    EXPECT_EQ(a.policy, "model");

    // cells cover every (opponent, map, valid starting build order)
    std::size_t expected = 0;
    for (int o : cfg.opponents) expected += cfg.maps.size() * c.build_orders_for(0, c.opponents[static_cast<std::size_t>(o)].faction).size();
    EXPECT_EQ(a.cells.size(), expected);

    const WinRateReport ctl = control_run(small_eval(), c, 21);
    EXPECT_EQ(ctl.policy, "control");
    for (const auto& cell : ctl.cells) {
        for (int s : cell.switches) EXPECT_EQ(s, 0);
        for (int g = 0; g < 2; ++g) {
            const auto meta = eval_meta(c, cell.opponent, cell.map, cell.starting_bo,
                                        cell_game_seed(21, cell.opponent, cell.map, cell.starting_bo, g));
            EXPECT_EQ(cell.wins[static_cast<std::size_t>(g)], play_control_game(c, meta).win ? 1 : 0);
        }
    }
}

TEST(Evaluate, JsonReportShape) {
    const auto c = sim::builtin_content();
    const WinRateReport r = control_run(small_eval(), c, 2);
    const std::string js = report_to_json(r);
    for (const char* key : {"\"policy\"", "\"per_opponent\"", "\"training_pool\"", "\"held_out\"", "\"aggregate\"",
                            "\"stddev\"", "\"cells\""})
        EXPECT_NE(js.find(key), std::string::npos) << key;
}

TEST(Trace, ColumnsAndConsistency) {
    const auto c = sim::builtin_content();
    const auto p = net::init_model(net::arch_for(c, 8, 8), 3);
    const auto meta = eval_meta(c, 11, 2, c.build_orders_for(0, c.opponents[11].faction)[0], 5);
    const std::string path = temp_path("trace.csv");
    const auto rows = emit_trace(p, c, {}, meta, path);
    ASSERT_FALSE(rows.empty());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    std::string expected = "tick,observed,predicted,truth,bo_id";
    for (std::size_t a = 0; a < c.actions().size(); ++a) expected += ",q_" + std::to_string(a);
    EXPECT_EQ(header, expected);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), std::count(header.begin(), header.end(), ','));
        ++lines;
    }
    EXPECT_EQ(lines, rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        EXPECT_EQ(rows[t].tick, static_cast<int>(t));
        EXPECT_LE(rows[t].observed, rows[t].truth + 1e-12);
        EXPECT_TRUE(c.specialized(rows[t].bo, meta.opponent_faction));
    }
    // the trace replays the evaluation game exactly
    EXPECT_EQ(trace_game(p, c, {}, meta).size(), rows.size());
    std::filesystem::remove(path);
}

TEST(Trace, Pearson) {
    EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
    EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
    EXPECT_EQ(pearson({1, 1, 1}, {1, 2, 3}), 0.0);
    // hand value: x = 1..4, y = 1,3,2,4 -> 0.8
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
    EXPECT_THROW(pearson({1, 2}, {1}), ContractError);
}

TEST(Checkpoint, RoundTripPreservesFloatValues) {
    const auto c = sim::builtin_content();
    const auto p = net::init_model(net::arch_for(c, 8, 8), 3);
    const std::string path = temp_path("ckpt.bin");
    save_checkpoint(p, make_manifest(p, {}, c, {7, 8}), path);
    const LoadedCheckpoint back = load_checkpoint(path, p.arch, c);
    EXPECT_EQ(net::params_hash(back.params), net::params_hash(round_to_float(p)));
    EXPECT_EQ(back.manifest.seed_lineage, (std::vector<std::uint64_t>{7, 8}));
    EXPECT_EQ(back.manifest.arch, p.arch);
    const auto a = back.params.list();
    const auto b = p.list();
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k]->value.size(); ++i)
            ASSERT_NEAR(a[k]->value[i], b[k]->value[i], 1e-6 * std::max(1.0, std::abs(b[k]->value[i])));

    // saving the restored parameters reproduces the file byte for byte
    const std::string again = temp_path("ckpt2.bin");
    save_checkpoint(back.params, back.manifest, again);
    EXPECT_EQ(read_file(path), read_file(again));
    std::filesystem::remove(again);
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsDamageAndMismatch) {
    const auto c = sim::builtin_content();
    const auto p = net::init_model(net::arch_for(c, 8, 8), 3);
    const std::string path = temp_path("ckpt_bad.bin");
    save_checkpoint(p, make_manifest(p, {}, c, {1}), path);
    const std::string bytes = read_file(path);

    EXPECT_THROW(load_checkpoint(path, net::arch_for(c, 16, 8), c), ContractError);
    sim::Content other = c;
    other.params.base_hp = 1000;
    EXPECT_THROW(load_checkpoint(path, p.arch, other), ContractError);

    write_file(path, bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(path), IoError);
    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x01;
    write_file(path, flipped);
    EXPECT_THROW(load_checkpoint(path), IoError);
    write_file(path, "BSWCKPT0" + bytes.substr(8));
    EXPECT_THROW(load_checkpoint(path), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), IoError);
}
