#include <benchmark/benchmark.h>

#include "buildswitch/pipeline.hpp"
#include "buildswitch/stratnet.hpp"

using namespace bsw;

namespace {

const sim::Content& content() {
    static const sim::Content c = sim::builtin_content();
    return c;
}

std::vector<feat::FeatureFrame> game_frames(std::uint64_t seed) {
    pipe::OffPolicyConfig cfg;
    cfg.games = 1;
    return pipe::prepare_game(pipe::generate_corpus(cfg, content(), seed).front(), {}, content(), true).frames;
}

// One inference step (fresh tape, no gradients).
void BM_InferenceStep(benchmark::State& state) {
    const auto params = net::init_model(net::arch_for(content(), static_cast<int>(state.range(0))), 1);
    const auto frames = game_frames(3);
    net::Carry carry = net::zero_carry(params.arch);
    std::size_t t = 0;
    for (auto _ : state) {
        auto out = net::encode_step(params, frames[t++ % frames.size()], carry);
        carry = std::move(out.carry);
        benchmark::DoNotOptimize(carry);
    }
}
BENCHMARK(BM_InferenceStep)->Arg(64)->Arg(128);

// Forward and backward over one whole game, the unit of training work.
void BM_TrainGame(benchmark::State& state) {
    auto params = net::init_model(net::arch_for(content(), static_cast<int>(state.range(0))), 1);
    pipe::OffPolicyConfig cfg;
    cfg.games = 1;
    const auto game = pipe::prepare_game(pipe::generate_corpus(cfg, content(), 5).front(), {}, content(), true);
    for (auto _ : state) {
        auto rep = pipe::assemble_losses(params, {&game}, {}, true);
        benchmark::DoNotOptimize(rep);
    }
    state.counters["ticks"] = static_cast<double>(game.frames.size());
}
BENCHMARK(BM_TrainGame)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_LstmCell(benchmark::State& state) {
    const auto H = static_cast<std::size_t>(state.range(0));
    const std::size_t in = 79;
    Rng rng(2);
    auto rand_param = [&](std::vector<std::size_t> shape) {
        ad::Array a(std::move(shape));
        for (double& v : a.values()) v = rng.uniform(-0.1, 0.1);
        return ad::Parameter("p", std::move(a));
    };
    ad::Parameter W = rand_param({4 * H, in}), U = rand_param({4 * H, H}), b = rand_param({4 * H});
    ad::Parameter x = rand_param({in}), h = rand_param({H}), c = rand_param({H});
    for (auto _ : state) {
        ad::Tape tape;
        const auto out = ad::lstm_cell(tape.param(x), tape.param(h), tape.param(c),
                                       {tape.param(W), tape.param(U), tape.param(b)});
        const ad::Var both[] = {out.h, out.c};
        tape.backward(ad::sum(std::vector<ad::Var>{ad::select(ad::concat(both), 0)}));
    }
}
BENCHMARK(BM_LstmCell)->Arg(64)->Arg(128);

}  // namespace
