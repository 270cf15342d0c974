#include "buildswitch/featurizer.hpp"

#include <algorithm>
#include <cmath>

#include "buildswitch/error.hpp"

namespace bsw::feat {

MemoryState update_memory(const MemoryState& mem, const sim::RawObservation& obs) {
    const std::size_t n = obs.enemy_visible.size();
    expect(obs.enemy_deaths.size() == n, "update_memory: deaths and visible sizes differ");
    MemoryState out = mem.counts.empty() ? MemoryState(n) : mem;
    expect(out.counts.size() == n, "update_memory: memory belongs to a different roster");
    for (std::size_t j = 0; j < n; ++j) {
        const int remembered = std::max(0, out.counts[j] - obs.enemy_deaths[j]);
        out.counts[j] = std::max(remembered, obs.enemy_visible[j]);
        if (obs.enemy_visible[j] > 0) out.last_seen[j] = obs.clock;
    }
    return out;
}

std::vector<double> normalize_counts(std::span<const int> counts, std::span<const double> values, double scale) {
    expect(counts.size() == values.size(), "normalize_counts: counts and values differ in length");
    std::vector<double> out(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) {
        expect(counts[j] >= 0, "normalize_counts: negative count");
        out[j] = counts[j] * values[j] * scale;
    }
    return out;
}

std::vector<double> normalize_counts(std::span<const int> counts, const sim::Content& content, double scale) {
    std::vector<double> values;
    values.reserve(content.units.size());
    for (const auto& u : content.units) values.push_back(u.value);
    return normalize_counts(counts, values, scale);
}

double transform_resource(double x, const FeaturizerConfig& cfg) {
    expect(x >= 0.0, "transform_resource: negative input");
    return std::log(cfg.resource_scale * x + cfg.resource_offset);
}

std::vector<double> transform_resources(double minerals, double gas, double used_supply, double max_supply,
                                        const FeaturizerConfig& cfg) {
    return {transform_resource(minerals, cfg), transform_resource(gas, cfg), transform_resource(used_supply, cfg),
            transform_resource(max_supply, cfg)};
}

double transform_time(double minutes, const FeaturizerConfig& cfg) {
    expect(minutes >= 0.0, "transform_time: negative time");
    return std::tanh(cfg.time_scale * minutes);
}

FeatureFrame featurize(const sim::RawObservation& obs, const MemoryState& mem, const FeaturizerConfig& cfg,
                       const sim::Content& content) {
    expect(obs.build_order >= 0 && obs.build_order < static_cast<int>(content.build_orders.size()),
           "featurize: build order index outside vocabulary");
    expect(obs.enemy_faction >= 0 && obs.enemy_faction < static_cast<int>(content.factions.size()),
           "featurize: race index outside vocabulary");
    expect(obs.map >= 0 && obs.map < static_cast<int>(content.maps.size()), "featurize: map index outside vocabulary");

    FeatureFrame f;
    f.ally = normalize_counts(obs.own_counts, content, cfg.count_scale);
    if (cfg.mode == EnemyMode::Memory) {
        expect(mem.counts.size() == content.units.size(), "featurize: memory not initialized");
        f.enemy = normalize_counts(mem.counts, content, cfg.count_scale);
    } else {
        f.enemy = normalize_counts(obs.enemy_visible, content, cfg.count_scale);
    }
    f.resources = transform_resources(obs.minerals, obs.gas, obs.used_supply, obs.max_supply, cfg);
    f.upgrades.assign(obs.upgrades_done.begin(), obs.upgrades_done.end());
    f.researching.assign(obs.upgrades_researching.begin(), obs.upgrades_researching.end());
    f.time = transform_time(static_cast<double>(obs.clock) / sim::kTicksPerMinute, cfg);
    f.build_order = obs.build_order;
    f.enemy_race = obs.enemy_faction;
    f.map = obs.map;
    return f;
}

std::vector<FeatureFrame> featurize_stream(std::span<const sim::RawObservation> stream, const FeaturizerConfig& cfg,
                                           const sim::Content& content) {
    std::vector<FeatureFrame> out;
    out.reserve(stream.size());
    MemoryState mem(content.units.size());
    for (const auto& obs : stream) {
        mem = update_memory(mem, obs);
        out.push_back(featurize(obs, mem, cfg, content));
    }
    return out;
}

std::string to_string(EnemyMode mode) { return mode == EnemyMode::Visible ? "visible" : "memory"; }

EnemyMode enemy_mode_from_string(const std::string& s) {
    if (s == "visible") return EnemyMode::Visible;
    if (s == "memory") return EnemyMode::Memory;
    throw ContractError("unknown featurizer mode '" + s + "'");
}

}  // namespace bsw::feat
