#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "buildswitch/adam.hpp"
#include "buildswitch/content.hpp"
#include "buildswitch/featurizer.hpp"
#include "buildswitch/game.hpp"
#include "buildswitch/rng.hpp"
#include "buildswitch/stratnet.hpp"

namespace bsw::pipe {

enum class SwitchSource : std::uint8_t { Random, Greedy, Opening };

struct SwitchEvent {
    int tick = 0;
    int previous_bo = -1;  // -1 for the opening
    int new_bo = 0;
    SwitchSource source = SwitchSource::Random;
    bool operator==(const SwitchEvent&) const = default;
};

struct GameMeta {
    std::uint64_t seed = 0;
    int map = 0;
    int opponent = 0;  // OpponentDef id
    int agent_faction = 0;
    int opponent_faction = 0;
    int opening_bo = 0;
    int opponent_bo = 0;
    bool operator==(const GameMeta&) const = default;
};

/// One game seen from the learning player: raw observations, hidden truth and
/// the switch decisions, plus the final result.
struct GameRecord {
    GameMeta meta;
    std::vector<sim::RawObservation> observations;
    std::vector<std::vector<int>> truth;  // true enemy counts per tick
    std::vector<SwitchEvent> switches;
    bool win = false;
    bool operator==(const GameRecord&) const = default;
};

struct OffPolicyConfig {
    int games = 20000;
    std::vector<double> interval_menu{8.0, 10.0, 13.0};  // mean minutes between random switches
    int series_length = 25;                              // games per opponent/map series (bandit window)
    int epochs = 4;
    int batch_games = 32;
    double lr = 1e-4;
    int bptt = 512;
    double aux_scale = 10.0;
    double aux_delta = 1.0;
    bool train_on_opening = true;
    double validation_fraction = 0.1;
    int eval_every = 50;  // updates between validation passes
    int workers = 1;
};

struct RefineConfig {
    int updates = 200;
    int batch_games = 64;
    double lr = 1e-5;
    int hold_min_minutes = 2;
    int hold_max_minutes = 13;
    std::vector<double> interval_menu{8.0, 10.0, 13.0};
    int workers = 1;
};

/// Per (opponent, map): plays and wins of each opening, reset at the start
/// of every series.
class BanditStats {
public:
    explicit BanditStats(int series_length = 25) : series_length_(series_length) {}

    struct Arm {
        int plays = 0;
        int wins = 0;
    };
    struct Table {
        std::map<int, Arm> arms;  // keyed by build order id
        int games = 0;
    };

    /// Table for the current series; starts a fresh one if the previous
    /// series is complete.
    const Table& table(int opponent, int map);
    void record(int opponent, int map, int bo, bool win);
    int series_length() const { return series_length_; }

private:
    int series_length_;
    std::map<std::pair<int, int>, Table> tables_;
};

/// Unplayed openings first (lowest index), then the highest UCB1 score.
int ucb1_opening(BanditStats& stats, int opponent, int map, const std::vector<int>& openings);
double ucb1_bonus(int total_plays, int arm_plays);

/// Switch times in minutes: a Poisson process with the given mean gap,
/// truncated at the cap.
std::vector<double> poisson_switch_times(Rng& rng, double mean_minutes, double cap_minutes);

struct SwitchSchedule {
    double mean_minutes = 0.0;
    std::vector<double> times;
};
SwitchSchedule sample_switch_schedule(Rng& rng, double cap_minutes, const std::vector<double>& interval_menu);

/// Tick at which a switch scheduled at `minutes` takes effect.
int switch_tick(double minutes);

/// Plays one corpus game with random switches at the scheduled times.
GameRecord play_random_switch_game(const sim::Content& content, const GameMeta& meta,
                                   const std::vector<double>& switch_minutes);

std::vector<GameRecord> generate_corpus(const OffPolicyConfig& cfg, const sim::Content& content,
                                        std::uint64_t base_seed);

// --- corpus files: gzip, one JSON record per line, header first

inline constexpr const char* kCorpusSchema = "buildswitch.corpus/1";

std::string record_to_json(const GameRecord& r);
GameRecord record_from_json(const std::string& line);
void save_corpus(const std::vector<GameRecord>& corpus, const sim::Content& content, const std::string& path);
/// Refuses corpora generated from different content.
std::vector<GameRecord> load_corpus(const std::string& path, const sim::Content& content);

// --- training

struct SwitchPoint {
    int tick = 0;
    int action = 0;
};

/// A record featurized for one featurizer configuration.
struct PreparedGame {
    std::vector<feat::FeatureFrame> frames;
    std::vector<ad::Array> targets;  // normalized true enemy counts
    std::vector<SwitchPoint> points;
    double outcome = 0.0;
};

PreparedGame prepare_game(const GameRecord& r, const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                          bool train_on_opening);

struct LossConfig {
    int bptt = 512;
    double aux_scale = 10.0;
    double aux_delta = 1.0;
};

struct LossReport {
    double q_loss = 0.0;
    double aux_loss = 0.0;
    double total = 0.0;
    double q_error_rate = 0.0;
    int q_samples = 0;
    int aux_samples = 0;
};

/// Unrolls every game in BPTT windows. With `accumulate`, backpropagates the
/// batch total into the parameter gradients (which are not zeroed here).
LossReport assemble_losses(net::ModelParams& params, const std::vector<const PreparedGame*>& batch,
                           const LossConfig& cfg, bool accumulate);

struct MetricPoint {
    int update = 0;
    double epoch = 0.0;
    LossReport train;       // mean over batches since the previous point
    LossReport validation;  // full validation split
};

struct TrainResult {
    net::ModelParams params;
    std::vector<MetricPoint> history;
    int updates = 0;
};

using ProgressFn = std::function<void(const MetricPoint&)>;

TrainResult train_offpolicy(const std::vector<GameRecord>& corpus, const OffPolicyConfig& cfg,
                            const feat::FeaturizerConfig& fcfg, const sim::Content& content,
                            net::ModelParams init, std::uint64_t seed, const ProgressFn& progress = {});

LossReport evaluate_losses(net::ModelParams& params, const std::vector<PreparedGame>& games, const LossConfig& cfg);

// --- on-policy refinement

struct OnPolicySetup {
    feat::FeaturizerConfig featurizer;
    net::SelectionPolicy selection;
};

/// Greedy play with one exploration event: a random build order held for a
/// random number of whole minutes, then greedy again.
GameRecord run_onpolicy_game(const net::ModelParams& params, const sim::Content& content, const RefineConfig& cfg,
                             const OnPolicySetup& setup, const GameMeta& meta);

/// Opponent, map and opening for on-policy game `index`.
GameMeta sample_onpolicy_meta(const sim::Content& content, std::uint64_t seed, std::uint64_t index);

struct RefineResult {
    net::ModelParams params;
    std::vector<LossReport> history;  // one entry per update
};

RefineResult refine_onpolicy(net::ModelParams params, const sim::Content& content, const RefineConfig& cfg,
                             const OnPolicySetup& setup, const LossConfig& loss_cfg, std::uint64_t seed,
                             bool train_on_opening = true);

std::string to_string(SwitchSource s);
SwitchSource switch_source_from_string(const std::string& s);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace bsw::pipe
