#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "buildswitch/content.hpp"
#include "buildswitch/featurizer.hpp"
#include "buildswitch/pipeline.hpp"
#include "buildswitch/stratnet.hpp"

namespace bsw::eval {

struct EvalConfig {
    std::vector<int> opponents;  // empty: every opponent in the content
    std::vector<int> maps;       // empty: every map
    int games_per_cell = 3;
    int workers = 1;
};

struct CellResult {
    int opponent = 0;
    int map = 0;
    int starting_bo = 0;
    std::vector<int> wins;      // one entry per game, 0 or 1
    std::vector<int> switches;  // build-order switches per game
    bool operator==(const CellResult&) const = default;
};

struct OpponentRate {
    int opponent = 0;
    std::string name;
    bool held_out = false;
    int games = 0;
    int wins = 0;
    double rate = 0.0;
};

struct PoolSummary {
    int opponents = 0;
    int games = 0;
    double aggregate = 0.0;               // mean of per-opponent rates
    std::vector<double> set_aggregates;   // same aggregate over replicate set k (game k of every cell)
    double stddev = 0.0;                  // sample std over the replicate-set aggregates
};

struct WinRateReport {
    std::string policy;  // "model" or "control"
    std::uint64_t seed = 0;
    std::vector<OpponentRate> per_opponent;
    PoolSummary training;
    PoolSummary held_out;
    std::vector<CellResult> cells;
};

/// Unweighted mean of per-opponent rates.
double aggregate_rate(const std::vector<double>& per_opponent_rates);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(const std::vector<double>& xs);

/// Builds per-opponent rates and pool summaries from cell results.
WinRateReport summarize(const sim::Content& content, std::vector<CellResult> cells, int games_per_cell);

struct GameResult {
    bool win = false;
    int switches = 0;
};

/// Seed of game `g` in a cell. Model and control runs share it, so their
/// reports are paired.
std::uint64_t cell_game_seed(std::uint64_t seed, int opponent, int map, int bo, int g);

GameResult play_greedy_game(const net::ModelParams& params, const sim::Content& content,
                            const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta);
GameResult play_control_game(const sim::Content& content, const pipe::GameMeta& meta);

/// Every (opponent, map, starting build order) cell, greedy play, no
/// exploration and no updates.
WinRateReport evaluate(const net::ModelParams& params, const EvalConfig& cfg, const sim::Content& content,
                       const pipe::OnPolicySetup& setup, std::uint64_t seed);
/// Same protocol with the starting build order kept all game.
WinRateReport control_run(const EvalConfig& cfg, const sim::Content& content, std::uint64_t seed);

std::string report_to_json(const WinRateReport& r);

// --- round-robin between fixed build orders

struct Pairing {
    int a = 0;  // build order ids
    int b = 0;
    int games = 0;
    int a_wins = 0;
    double rate() const { return games > 0 ? static_cast<double>(a_wins) / games : 0.0; }
};

struct TournamentReport {
    std::uint64_t seed = 0;
    std::vector<int> build_orders;
    std::vector<Pairing> pairings;  // every unordered pair once, a listed before b
};

/// Every pair of the given build orders plays `games` seeded games with both
/// sides holding their order. Maps rotate and seats alternate between games.
TournamentReport tournament(const sim::Content& content, const std::vector<int>& build_orders, int games,
                            std::uint64_t seed, int workers = 1);
/// Win rate of `a` against `b`.
double win_rate(const TournamentReport& t, int a, int b);

struct Cycle {
    std::array<int, 3> build_orders{};  // each beats the next, the last beats the first
    double weakest = 0.0;               // smallest of the three win rates
};
/// The 3-cycle whose weakest edge is strongest; nullopt if the results are transitive.
std::optional<Cycle> strongest_cycle(const TournamentReport& t);
std::string tournament_to_json(const TournamentReport& t, const sim::Content& content);

pipe::GameMeta eval_meta(const sim::Content& content, int opponent, int map, int bo, std::uint64_t seed);

// --- prediction traces

struct TraceRow {
    int tick = 0;
    double observed = 0.0;   // sum of normalized visible enemy counts
    double predicted = 0.0;  // sum of the aux head's outputs
    double truth = 0.0;      // sum of normalized true enemy counts
    int bo = 0;
    std::vector<double> q;
};

std::vector<TraceRow> trace_game(const net::ModelParams& params, const sim::Content& content,
                                 const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta);
void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& path);
std::vector<TraceRow> emit_trace(const net::ModelParams& params, const sim::Content& content,
                                 const pipe::OnPolicySetup& setup, const pipe::GameMeta& meta, const std::string& path);

/// Pearson correlation; 0 when either series is constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// --- checkpoints

inline constexpr const char* kCheckpointSchema = "buildswitch.checkpoint/1";

struct Manifest {
    std::string schema = kCheckpointSchema;
    net::ArchConfig arch;
    feat::FeaturizerConfig featurizer;
    std::string content_hash;
    std::vector<std::uint64_t> seed_lineage;
};

Manifest make_manifest(const net::ModelParams& params, const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                       std::vector<std::uint64_t> seed_lineage);

/// Magic, manifest JSON, float32 little-endian payload, FNV-1a trailer.
void save_checkpoint(const net::ModelParams& params, const Manifest& manifest, const std::string& path);

struct LoadedCheckpoint {
    net::ModelParams params;
    Manifest manifest;
};
/// Throws IoError on a damaged file.
LoadedCheckpoint load_checkpoint(const std::string& path);
/// Also refuses a checkpoint whose architecture or content hash differ.
LoadedCheckpoint load_checkpoint(const std::string& path, const net::ArchConfig& expected_arch,
                                 const sim::Content& content);

/// Parameters as a checkpoint would restore them.
net::ModelParams round_to_float(const net::ModelParams& params);

}  // namespace bsw::eval
