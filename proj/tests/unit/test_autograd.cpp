#include <gtest/gtest.h>

#include <cmath>

#include "buildswitch/adam.hpp"
#include "buildswitch/autograd.hpp"
#include "buildswitch/error.hpp"
#include "buildswitch/gradcheck.hpp"
#include "buildswitch/rng.hpp"
#include "test_support.hpp"

using namespace bsw::ad;
using testing_support::numeric_grad;
using testing_support::rel_err;

namespace {

Array mat(std::size_t r, std::size_t c, std::vector<double> d) { return Array({r, c}, std::move(d)); }

}  // namespace

TEST(Affine, IdentityPassesInputThrough) {
    Tape t;
    Var y = affine(t.constant(Array::vec({3, -1})), t.constant(mat(2, 2, {1, 0, 0, 1})), t.constant(Array::vec({0, 0})));
    EXPECT_EQ(y.value(), Array::vec({3, -1}));
}

TEST(Affine, HandComputedProduct) {
    Tape t;
    Var y = affine(t.constant(Array::vec({1, 1})), t.constant(mat(2, 2, {1, 2, 0, 1})), t.constant(Array::vec({1, 0})));
    EXPECT_DOUBLE_EQ(y.value()[0], 4.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 1.0);
}

TEST(Affine, InputGradientMatchesFiniteDifferences) {
    Parameter x("x", Array::vec({1, 1}));
    const Array W = mat(2, 2, {1, 2, 0, 1});
    auto y0 = [&](Tape& t) { return select(affine(t.param(x), t.constant(W), t.constant(Array::vec({1, 0}))), 0); };
    Tape t;
    t.backward(y0(t));
    const auto num = numeric_grad([&] { Tape u; return y0(u).value()[0]; }, {&x});
    EXPECT_NEAR(x.grad[0], 1.0, 1e-12);
    EXPECT_NEAR(x.grad[1], 2.0, 1e-12);
    EXPECT_NEAR(num[0][0], 1.0, 1e-8);
    EXPECT_NEAR(num[0][1], 2.0, 1e-8);
}

TEST(Affine, ShapeMismatchIsRejected) {
    Tape t;
    EXPECT_THROW(affine(t.constant(Array::vec({1, 2, 3})), t.constant(mat(2, 2, {1, 0, 0, 1})), t.constant(Array::vec({0, 0}))),
                 bsw::ContractError);
}

TEST(Activations, KnownValues) {
    Tape t;
    EXPECT_DOUBLE_EQ(sigmoid(t.constant(Array::scalar(0))).value()[0], 0.5);
    EXPECT_DOUBLE_EQ(tanh_act(t.constant(Array::scalar(0))).value()[0], 0.0);
    EXPECT_NEAR(sigmoid(t.constant(Array::scalar(2))).value()[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
    EXPECT_DOUBLE_EQ(relu(t.constant(Array::vec({-1, 2}))).value()[1], 2.0);
    EXPECT_DOUBLE_EQ(relu(t.constant(Array::vec({-1, 2}))).value()[0], 0.0);
}

TEST(Concat, JoinsAndRoutesGradient) {
    Tape t;
    Parameter a("a", Array::vec({1})), b("b", Array::vec({2, 3}));
    const Var single[] = {t.param(b)};
    EXPECT_EQ(concat(single).value(), Array::vec({2, 3}));
    const Var xs[] = {t.param(a), t.param(b)};
    Var y = concat(xs);
    EXPECT_EQ(y.value(), Array::vec({1, 2, 3}));
    t.backward(select(y, 2));
    EXPECT_EQ(a.grad, Array::vec({0}));
    EXPECT_EQ(b.grad, Array::vec({0, 1}));
}

TEST(Concat, EmptyListIsRejected) {
    std::vector<Var> none;
    EXPECT_THROW(concat(none), bsw::ContractError);
}

TEST(Embed, LooksUpRowsAndAccumulates) {
    Parameter table("table", mat(3, 2, {1, 0, 0, 1, 0, 0}));
    Tape t;
    EXPECT_EQ(embed_lookup(t.param(table), 0).value(), Array::vec({1, 0}));
    // the same row twice: its gradient is the sum of both upstream gradients
    Var a = embed_lookup(t.param(table), 1), b = embed_lookup(t.param(table), 1);
    Var loss = add(scale(select(a, 0), 2.0), scale(select(b, 0), 3.0));
    t.backward(loss);
    EXPECT_DOUBLE_EQ(table.grad.at(1, 0), 5.0);
    EXPECT_DOUBLE_EQ(table.grad.at(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(table.grad.at(2, 0), 0.0);
    EXPECT_THROW(embed_lookup(t.param(table), 3), bsw::ContractError);
}

TEST(Lstm, ZeroParametersAndZeroCellGiveZero) {
    Tape t;
    const std::size_t H = 3, n = 2;
    LstmWeights w{t.constant(Array({4 * H, n})), t.constant(Array({4 * H, H})), t.constant(Array({4 * H}))};
    LstmOut o = lstm_cell(t.constant(Array::vec({0.3, -2})), t.constant(Array({H})), t.constant(Array({H})), w);
    for (double v : o.h.value().values()) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : o.c.value().values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Lstm, ZeroParametersHalveTheCell) {
    Tape t;
    const std::size_t H = 2, n = 1;
    LstmWeights w{t.constant(Array({4 * H, n})), t.constant(Array({4 * H, H})), t.constant(Array({4 * H}))};
    LstmOut o = lstm_cell(t.constant(Array::vec({1})), t.constant(Array({H})), t.constant(Array({H}, 1.0)), w);
    for (std::size_t i = 0; i < H; ++i) {
        EXPECT_DOUBLE_EQ(o.c.value()[i], 0.5);
        EXPECT_NEAR(o.h.value()[i], 0.5 * std::tanh(0.5), 1e-15);
    }
}

TEST(Lstm, GradientOfSummedHiddenMatchesFiniteDifferences) {
    bsw::Rng rng(11);
    const std::size_t H = 3, n = 4;
    auto rnd = [&](std::vector<std::size_t> shape) {
        Array a(std::move(shape));
        for (double& v : a.values()) v = rng.uniform(-1, 1);
        return a;
    };
    Parameter x("x", rnd({n})), h("h", rnd({H})), c("c", rnd({H})), W("W", rnd({4 * H, n})), U("U", rnd({4 * H, H})),
        b("b", rnd({4 * H}));
    auto build = [&](Tape& t) {
        LstmOut o = lstm_cell(t.param(x), t.param(h), t.param(c), {t.param(W), t.param(U), t.param(b)});
        std::vector<Var> parts;
        for (std::size_t i = 0; i < H; ++i) parts.push_back(select(o.h, i));
        return sum(parts);
    };
    Tape t;
    t.backward(build(t));
    std::vector<Parameter*> ps{&x, &h, &c, &W, &U, &b};
    const auto num = numeric_grad([&] { Tape u; return build(u).value()[0]; }, ps);
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::size_t k = 0; k < num[i].size(); ++k)
            EXPECT_LT(rel_err(ps[i]->grad[k], num[i][k]), 1e-4) << ps[i]->name << "[" << k << "]";
}

TEST(Huber, QuadraticAndLinearRegions) {
    Tape t;
    EXPECT_DOUBLE_EQ(huber_loss(t.constant(Array::vec({1, 2})), Array::vec({1, 2}), 1.0).value()[0], 0.0);
    EXPECT_DOUBLE_EQ(huber_loss(t.constant(Array::vec({0.5})), Array::vec({0.0}), 1.0).value()[0], 0.125);
    EXPECT_DOUBLE_EQ(huber_loss(t.constant(Array::vec({2.0})), Array::vec({0.0}), 1.0).value()[0], 1.5);
    // mean over elements
    EXPECT_DOUBLE_EQ(huber_loss(t.constant(Array::vec({0.5, 2.0})), Array::vec({0.0, 0.0}), 1.0).value()[0],
                     (0.125 + 1.5) / 2);
}

TEST(Bce, KnownValuesAndClamp) {
    Tape t;
    EXPECT_NEAR(bce_loss(t.constant(Array::scalar(0.5)), 1.0).value()[0], std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(t.constant(Array::scalar(0.5)), 0.0).value()[0], std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(t.constant(Array::scalar(0.9)), 1.0).value()[0], -std::log(0.9), 1e-15);
    Parameter p("p", Array::scalar(1.0));
    Var l = bce_loss(t.param(p), 0.0);
    EXPECT_TRUE(std::isfinite(l.value()[0]));
    EXPECT_NEAR(l.value()[0], -std::log(kBceClamp), 1e-6);
    t.backward(l);
    EXPECT_TRUE(std::isfinite(p.grad[0]));
}

TEST(Backward, ScalarContract) {
    Parameter p("p", Array::scalar(0.0));
    {
        Tape t;
        t.backward(t.param(p));
        EXPECT_DOUBLE_EQ(p.grad[0], 1.0);
    }
    p.zero_grad();
    {
        Tape t;
        t.backward(sigmoid(t.param(p)));
        EXPECT_DOUBLE_EQ(p.grad[0], 0.25);
    }
    Parameter v("v", Array::vec({1, 2}));
    Tape t;
    EXPECT_THROW(t.backward(t.param(v)), bsw::ContractError);
}

TEST(Backward, RepeatedCallsAccumulate) {
    Parameter p("p", Array::scalar(0.7));
    Tape t;
    Var l = tanh_act(scale(t.param(p), 2.0));
    t.backward(l);
    const double once = p.grad[0];
    t.backward(l);
    EXPECT_DOUBLE_EQ(p.grad[0], 2 * once);
}

TEST(Backward, SharedNodeSumsConsumerGradients) {
    // y = x*... used twice vs. the same expression built from two independent copies
    Parameter x("x", Array::vec({0.3, -0.8}));
    Parameter W("W", Array({2, 2}, std::vector<double>{0.5, -1, 2, 0.25}));
    Tape t;
    Var h = tanh_act(affine(t.param(x), t.param(W), t.constant(Array::vec({0, 0}))));
    t.backward(add(select(sigmoid(h), 0), select(relu(h), 1)));
    const Array shared_x = x.grad, shared_W = W.grad;

    x.zero_grad();
    W.zero_grad();
    Tape u;
    Var h1 = tanh_act(affine(u.param(x), u.param(W), u.constant(Array::vec({0, 0}))));
    u.backward(select(sigmoid(h1), 0));
    Tape v;
    Var h2 = tanh_act(affine(v.param(x), v.param(W), v.constant(Array::vec({0, 0}))));
    v.backward(select(relu(h2), 1));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(shared_x[i], x.grad[i], 1e-15);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(shared_W[i], W.grad[i], 1e-15);
}

TEST(Backward, ValuesAndGradientsStayFiniteOnBoundedInputs) {
    bsw::Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Parameter x("x", Array::vec({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)}));
        Tape t;
        Var s = sigmoid(t.param(x));
        Var parts[] = {select(s, 0), select(tanh_act(t.param(x)), 1), select(relu(t.param(x)), 2),
                       bce_loss(select(s, 2), 1.0), huber_loss(t.param(x), Array::vec({0, 0, 0}), 1.0)};
        Var l = sum(parts);
        ASSERT_TRUE(std::isfinite(l.value()[0]));
        t.backward(l);
        ASSERT_TRUE(x.grad.all_finite());
    }
}

TEST(Gradcheck, SuiteCoversEveryOpWithinTolerance) {
    const auto results = run_gradcheck_suite(5, 3);
    ASSERT_GE(results.size(), 13u);
    for (const auto& r : results) {
        EXPECT_EQ(r.trials, 5) << r.op;
        EXPECT_TRUE(r.all_finite) << r.op;
        EXPECT_LT(r.max_rel_error, 1e-4) << r.op;
    }
}

TEST(Adam, ZeroGradientIsIdentity) {
    Parameter p("p", Array::vec({1.5, -2, 0}));
    std::vector<Parameter*> ps{&p};
    AdamState st(ps, {});
    for (int i = 0; i < 5; ++i) adam_step(ps, st);
    EXPECT_EQ(p.value, Array::vec({1.5, -2, 0}));
    EXPECT_EQ(st.t, 5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Parameter p("p", Array::scalar(0.0));
    p.grad[0] = 1.0;
    std::vector<Parameter*> ps{&p};
    AdamState st(ps, {1e-4, 0.9, 0.999, 1e-8});
    adam_step(ps, st);
    EXPECT_NEAR(p.value[0], -1e-4 * (1.0 / (1.0 + 1e-8)), 1e-18);
}

TEST(Adam, TenStepsMatchReferenceRecurrence) {
    bsw::Rng rng(9);
    Parameter p("p", Array::vec({0.1, -0.4, 2.0}));
    std::vector<Parameter*> ps{&p};
    const AdamHyper hp{3e-3, 0.9, 0.999, 1e-8};
    AdamState st(ps, hp);
    std::vector<double> theta{0.1, -0.4, 2.0}, m(3, 0.0), v(3, 0.0);
    for (int step = 1; step <= 10; ++step) {
        for (std::size_t i = 0; i < 3; ++i) p.grad[i] = rng.uniform(-2, 2);
        for (std::size_t i = 0; i < 3; ++i) {
            const double g = p.grad[i];
            m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g * g;
            const double mh = m[i] / (1 - std::pow(hp.beta1, step));
            const double vh = v[i] / (1 - std::pow(hp.beta2, step));
            theta[i] -= hp.lr * mh / (std::sqrt(vh) + hp.epsilon);
        }
        adam_step(ps, st);
        EXPECT_EQ(st.t, step);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.value[i], theta[i], 1e-12);
}
