#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "buildswitch/content.hpp"
#include "buildswitch/game.hpp"

namespace bsw::feat {

enum class EnemyMode : std::uint8_t { Visible, Memory };

struct FeaturizerConfig {
    EnemyMode mode = EnemyMode::Memory;
    double count_scale = 1e-3;     // multiplies count * unit value
    double resource_scale = 0.2;   // log(scale * x + offset)
    double resource_offset = 1.0;
    double time_scale = 0.1;       // tanh(scale * minutes)
};

/// Enemy units seen so far, minus the ones whose destruction was observed.
struct MemoryState {
    std::vector<int> counts;
    std::vector<int> last_seen;  // tick, -1 if never seen

    MemoryState() = default;
    explicit MemoryState(std::size_t num_types) : counts(num_types, 0), last_seen(num_types, -1) {}
};

struct FeatureFrame {
    std::vector<double> ally;         // normalized counts per unit type
    std::vector<double> enemy;        // normalized counts per unit type (visible or memory)
    std::vector<double> resources;    // minerals, gas, used supply, max supply, transformed
    std::vector<double> upgrades;     // available flags
    std::vector<double> researching;  // in-progress flags
    double time = 0.0;
    int build_order = 0;
    int enemy_race = 0;
    int map = 0;

    bool operator==(const FeatureFrame&) const = default;
};

MemoryState update_memory(const MemoryState& mem, const sim::RawObservation& obs);

std::vector<double> normalize_counts(std::span<const int> counts, std::span<const double> values,
                                     double scale = 1e-3);
std::vector<double> normalize_counts(std::span<const int> counts, const sim::Content& content, double scale = 1e-3);

double transform_resource(double x, const FeaturizerConfig& cfg = {});
std::vector<double> transform_resources(double minerals, double gas, double used_supply, double max_supply,
                                        const FeaturizerConfig& cfg = {});
double transform_time(double minutes, const FeaturizerConfig& cfg = {});

/// `mem` must already include `obs` when the config is in memory mode.
FeatureFrame featurize(const sim::RawObservation& obs, const MemoryState& mem, const FeaturizerConfig& cfg,
                       const sim::Content& content);

/// Featurizes an observation stream, threading the memory through it.
std::vector<FeatureFrame> featurize_stream(std::span<const sim::RawObservation> stream, const FeaturizerConfig& cfg,
                                           const sim::Content& content);

std::string to_string(EnemyMode mode);
EnemyMode enemy_mode_from_string(const std::string& s);

}  // namespace bsw::feat
