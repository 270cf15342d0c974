#include "buildswitch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "buildswitch/autograd.hpp"
#include "buildswitch/content.hpp"
#include "buildswitch/pipeline.hpp"
#include "buildswitch/rng.hpp"
#include "buildswitch/stratnet.hpp"

namespace bsw::ad {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

namespace {

using Builder = std::function<Var(Tape&, std::vector<Parameter*>&)>;

Array random_array(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Array a(std::move(shape));
    for (double& v : a.values()) v = rng.uniform(lo, hi);
    return a;
}

/// Reduces a vector output to a scalar with fixed random weights.
Var weighted(Tape& t, Var y, const Array& w) {
    return affine(y, t.constant(Array({1, w.size()}, std::vector<double>(w.values().begin(), w.values().end()))),
                  t.constant(Array::vec({0.0})));
}

double evaluate(const Builder& build, std::vector<Parameter*>& params) {
    Tape t;
    return build(t, params).value()[0];
}

/// `coords` limits the comparison to a subset of (parameter, element) pairs;
/// empty means every coordinate.
void check(GradCheckResult& res, const Builder& build, std::vector<Parameter*>& params, double step,
           const std::vector<std::pair<std::size_t, std::size_t>>& coords = {}) {
    for (auto* p : params) p->grad = Array::zeros_like(p->value);
    {
        Tape t;
        Var loss = build(t, params);
        res.all_finite = res.all_finite && loss.value().all_finite();
        t.backward(loss);
    }
    auto compare = [&](std::size_t pi, std::size_t k) {
        Parameter& p = *params[pi];
        const double orig = p.value[k];
        p.value[k] = orig + step;
        const double up = evaluate(build, params);
        p.value[k] = orig - step;
        const double down = evaluate(build, params);
        p.value[k] = orig;
        const double numeric = (up - down) / (2.0 * step);
        res.all_finite = res.all_finite && std::isfinite(p.grad[k]);
        res.max_rel_error = std::max(res.max_rel_error, relative_error(p.grad[k], numeric));
        ++res.coordinates;
    };
    if (coords.empty()) {
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (std::size_t k = 0; k < params[pi]->value.size(); ++k) compare(pi, k);
    } else {
        for (const auto& [pi, k] : coords) compare(pi, k);
    }
}

/// Keeps values away from the kinks of relu and Huber.
void push_off_kinks(Array& a, double kink, double gap) {
    for (double& v : a.values())
        if (std::abs(std::abs(v) - kink) < gap) v = (v < 0 ? -1.0 : 1.0) * (kink + gap);
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

GradCheckResult check_op(const std::string& name, int trials, std::uint64_t seed, double step,
                         const std::function<void(Rng&, std::vector<Parameter>&, Builder&)>& setup) {
    GradCheckResult res;
    res.op = name;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(seed, fnv1a64(name), trial));
        std::vector<Parameter> storage;
        Builder build;
        setup(rng, storage, build);
        std::vector<Parameter*> params;
        for (auto& p : storage) params.push_back(&p);
        check(res, build, params, step);
        ++res.trials;
    }
    return res;
}

GradCheckResult check_network(int trials, std::uint64_t seed, double step) {
    GradCheckResult res;
    res.op = "network";
    const sim::Content content = sim::builtin_content();
    net::ArchConfig arch = net::arch_for(content, 8, 8);
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(seed, 0x4e7, trial));
        net::ModelParams model = net::init_model(arch, rng.next_u64());
        // biases get random values too so every branch is exercised
        for (auto* p : model.list())
            if (p->value.rank() == 1)
                for (double& v : p->value.values()) v = rng.uniform(-0.5, 0.5);

        pipe::PreparedGame game;
        for (int t = 0; t < 3; ++t) {
            feat::FeatureFrame f;
            for (int j = 0; j < arch.num_unit_types; ++j) {
                f.ally.push_back(rng.uniform(0.0, 2.0));
                f.enemy.push_back(rng.uniform(0.0, 2.0));
            }
            for (int j = 0; j < 4; ++j) f.resources.push_back(rng.uniform(0.0, 6.0));
            for (int j = 0; j < arch.num_upgrades; ++j) {
                f.upgrades.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
                f.researching.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
            }
            f.time = rng.uniform(0.0, 0.99);
            f.build_order = static_cast<int>(rng.uniform_int(0, arch.num_build_orders - 1));
            f.enemy_race = static_cast<int>(rng.uniform_int(0, arch.num_races - 1));
            f.map = static_cast<int>(rng.uniform_int(0, arch.num_maps - 1));
            game.frames.push_back(f);
            std::vector<double> target;
            for (int j = 0; j < arch.num_unit_types; ++j) target.push_back(rng.uniform(0.0, 2.0));
            game.targets.push_back(Array::vec(target));
        }
        game.points.push_back({0, static_cast<int>(rng.uniform_int(0, arch.num_actions - 1))});
        game.points.push_back({2, static_cast<int>(rng.uniform_int(0, arch.num_actions - 1))});
        game.outcome = rng.bernoulli(0.5) ? 1.0 : 0.0;

        const pipe::LossConfig cfg{512, 10.0, 1.0};
        std::vector<Parameter*> params = model.list();
        Builder build = [&](Tape& t, std::vector<Parameter*>&) {
            Var h = t.constant(Array({8})), c = t.constant(Array({8}));
            std::vector<Var> terms;
            std::size_t point = 0;
            for (std::size_t s = 0; s < game.frames.size(); ++s) {
                const net::StepVars v = net::encode_step(t, model, game.frames[s], h, c);
                h = v.h;
                c = v.c;
                terms.push_back(scale(huber_loss(v.aux, game.targets[s], cfg.aux_delta), cfg.aux_scale / 3.0));
                for (; point < game.points.size() && game.points[point].tick == static_cast<int>(s); ++point)
                    terms.push_back(scale(bce_loss(select(v.q, static_cast<std::size_t>(game.points[point].action)), game.outcome), 0.5));
            }
            return sum(terms);
        };
        // every coordinate of the small groups, a random sample of the large ones
        std::vector<std::pair<std::size_t, std::size_t>> coords;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            const std::size_t n = params[pi]->value.size();
            if (n <= 64) {
                for (std::size_t k = 0; k < n; ++k) coords.emplace_back(pi, k);
            } else {
                for (int s = 0; s < 24; ++s) coords.emplace_back(pi, dim(rng, 0, n - 1));
            }
        }
        check(res, build, params, step, coords);
        ++res.trials;
    }
    return res;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(int trials, std::uint64_t seed, double step) {
    std::vector<GradCheckResult> out;

    out.push_back(check_op("affine", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 6), m = dim(rng, 1, 6);
        ps = {Parameter("x", random_array(rng, {n}, -10, 10)), Parameter("W", random_array(rng, {m, n}, -1, 1)),
              Parameter("b", random_array(rng, {m}, -1, 1))};
        const Array w = random_array(rng, {m}, -1, 1);
        b = [w](Tape& t, std::vector<Parameter*>& p) {
            return weighted(t, affine(t.param(*p[0]), t.param(*p[1]), t.param(*p[2])), w);
        };
    }));

    auto unary = [&](const std::string& name, Var (*f)(Var), double kink) {
        return check_op(name, trials, seed, step, [f, kink](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
            const std::size_t n = dim(rng, 1, 8);
            Array x = random_array(rng, {n}, -10, 10);
            if (kink >= 0) push_off_kinks(x, kink, 1e-3);
            ps = {Parameter("x", x)};
            const Array w = random_array(rng, {n}, -1, 1);
            b = [w, f](Tape& t, std::vector<Parameter*>& p) { return weighted(t, f(t.param(*p[0])), w); };
        });
    };
    out.push_back(unary("sigmoid", sigmoid, -1));
    out.push_back(unary("tanh", tanh_act, -1));
    out.push_back(unary("relu", relu, 0.0));

    out.push_back(check_op("concat", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t k = dim(rng, 1, 4);
        std::size_t total = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t n = dim(rng, 1, 5);
            total += n;
            ps.emplace_back("x" + std::to_string(i), random_array(rng, {n}, -10, 10));
        }
        const Array w = random_array(rng, {total}, -1, 1);
        b = [w](Tape& t, std::vector<Parameter*>& p) {
            std::vector<Var> xs;
            for (auto* q : p) xs.push_back(t.param(*q));
            return weighted(t, concat(xs), w);
        };
    }));

    out.push_back(check_op("slice", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 8);
        const std::size_t off = dim(rng, 0, n - 1), len = dim(rng, 1, n - off);
        ps = {Parameter("x", random_array(rng, {n}, -10, 10))};
        const Array w = random_array(rng, {len}, -1, 1);
        b = [w, off, len](Tape& t, std::vector<Parameter*>& p) { return weighted(t, slice(t.param(*p[0]), off, len), w); };
    }));

    out.push_back(check_op("embed_lookup", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t V = dim(rng, 1, 5), D = dim(rng, 1, 8);
        const std::size_t i = dim(rng, 0, V - 1), j = dim(rng, 0, V - 1);
        ps = {Parameter("table", random_array(rng, {V, D}, -10, 10))};
        const Array w = random_array(rng, {D}, -1, 1);
        b = [w, i, j](Tape& t, std::vector<Parameter*>& p) {
            const Var table = t.param(*p[0]);
            return add(weighted(t, embed_lookup(table, i), w), weighted(t, tanh_act(embed_lookup(table, j)), w));
        };
    }));

    out.push_back(check_op("select", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 8), i = dim(rng, 0, n - 1);
        ps = {Parameter("x", random_array(rng, {n}, -10, 10))};
        b = [i](Tape& t, std::vector<Parameter*>& p) { return scale(sigmoid(select(t.param(*p[0]), i)), 3.0); };
    }));

    out.push_back(check_op("add_sum_scale", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 6);
        ps = {Parameter("a", random_array(rng, {n}, -10, 10)), Parameter("b", random_array(rng, {n}, -10, 10))};
        const Array w = random_array(rng, {n}, -1, 1);
        const double k = rng.uniform(-3, 3);
        b = [w, k](Tape& t, std::vector<Parameter*>& p) {
            const Var a = t.param(*p[0]), c = t.param(*p[1]);
            const Var parts[] = {weighted(t, add(a, c), w), weighted(t, scale(a, k), w), weighted(t, tanh_act(c), w)};
            return sum(parts);
        };
    }));

    out.push_back(check_op("lstm_cell", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 5), H = dim(rng, 1, 4);
        ps = {Parameter("x", random_array(rng, {n}, -10, 10)), Parameter("h", random_array(rng, {H}, -1, 1)),
              Parameter("c", random_array(rng, {H}, -10, 10)), Parameter("W", random_array(rng, {4 * H, n}, -0.5, 0.5)),
              Parameter("U", random_array(rng, {4 * H, H}, -1, 1)), Parameter("b", random_array(rng, {4 * H}, -1, 1))};
        const Array wh = random_array(rng, {H}, -1, 1), wc = random_array(rng, {H}, -1, 1);
        b = [wh, wc](Tape& t, std::vector<Parameter*>& p) {
            const LstmOut o = lstm_cell(t.param(*p[0]), t.param(*p[1]), t.param(*p[2]),
                                        {t.param(*p[3]), t.param(*p[4]), t.param(*p[5])});
            return add(weighted(t, o.h, wh), weighted(t, o.c, wc));
        };
    }));

    out.push_back(check_op("huber_loss", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        const std::size_t n = dim(rng, 1, 8);
        const double delta = rng.uniform(0.2, 3.0);
        Array pred = random_array(rng, {n}, -10, 10), target = random_array(rng, {n}, -10, 10);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = pred[i] - target[i];
            if (std::abs(std::abs(r) - delta) < 1e-3) pred[i] += 2e-3;
        }
        ps = {Parameter("pred", pred)};
        b = [target, delta](Tape& t, std::vector<Parameter*>& p) { return huber_loss(t.param(*p[0]), target, delta); };
    }));

    out.push_back(check_op("bce_loss", trials, seed, step, [](Rng& rng, std::vector<Parameter>& ps, Builder& b) {
        ps = {Parameter("p", Array::vec({rng.uniform(0.02, 0.98)}))};
        const double target = rng.bernoulli(0.5) ? 1.0 : 0.0;
        b = [target](Tape& t, std::vector<Parameter*>& p) { return bce_loss(t.param(*p[0]), target); };
    }));

    out.push_back(check_network(trials, seed, step));
    return out;
}

}  // namespace bsw::ad
