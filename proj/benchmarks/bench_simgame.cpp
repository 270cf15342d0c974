#include <benchmark/benchmark.h>

#include "buildswitch/featurizer.hpp"
#include "buildswitch/game.hpp"

using namespace bsw;

namespace {

const sim::Content& content() {
    static const sim::Content c = sim::builtin_content();
    return c;
}

void BM_FixedGame(benchmark::State& state) {
    const auto& c = content();
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const auto& opp = c.opponents[seed % c.opponents.size()];
        const int bo = c.build_orders_for(0, opp.faction)[seed % 4];
        benchmark::DoNotOptimize(sim::play_fixed(c, static_cast<int>(seed % c.maps.size()), 0, opp.faction, bo,
                                                 opp.build_order, seed));
        ++seed;
    }
}
BENCHMARK(BM_FixedGame)->Unit(benchmark::kMicrosecond);

// A game with both players observed and featurized every tick, as the
// corpus generator and the controller do.
void BM_ObservedGame(benchmark::State& state) {
    const auto& c = content();
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const auto& opp = c.opponents[seed % c.opponents.size()];
        sim::GameState s = sim::new_game(c, 0, 0, opp.faction, c.build_orders_for(0, opp.faction)[0],
                                         opp.build_order, seed++);
        feat::MemoryState mem(c.units.size());
        while (!s.terminal()) {
            const auto obs = sim::observe(c, s, 0);
            mem = feat::update_memory(mem, obs);
            benchmark::DoNotOptimize(feat::featurize(obs, mem, {}, c));
            sim::advance_tick(c, s);
        }
    }
}
BENCHMARK(BM_ObservedGame)->Unit(benchmark::kMicrosecond);

void BM_Observe(benchmark::State& state) {
    const auto& c = content();
    const auto& opp = c.opponents[4];
    sim::GameState s = sim::new_game(c, 0, 0, opp.faction, 1, opp.build_order, 9);
    for (int t = 0; t < 120 && !s.terminal(); ++t) sim::advance_tick(c, s);
    for (auto _ : state) benchmark::DoNotOptimize(sim::observe(c, s, 0));
}
BENCHMARK(BM_Observe);

}  // namespace
