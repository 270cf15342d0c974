#include "buildswitch/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "buildswitch/error.hpp"

namespace bsw::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tape& same_tape(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        expect(v.valid(), "autograd: operand is not attached to a tape");
        if (t == nullptr) t = v.tape();
        expect(v.tape() == t, "autograd: operands live on different tapes");
    }
    return *t;
}

bool is_vector(const Array& a) { return a.rank() == 1; }

}  // namespace

// ---------------------------------------------------------------- Array

Array::Array(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Array::Array(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    expect(data_.size() == product(shape_), "Array: data length does not match shape");
}

Array Array::vec(std::vector<double> data) {
    const std::size_t n = data.size();
    return Array({n}, std::move(data));
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Parameter::Parameter(std::string n, Array v)
    : name(std::move(n)), value(std::move(v)), grad(Array::zeros_like(value)) {}

// ---------------------------------------------------------------- Var / Tape

const Array& Var::value() const { return tape_->value_of(id_); }
const Array& Var::grad() const { return tape_->grad_of(id_); }

Var Tape::push(detail::Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) {
    detail::Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
    detail::Node n;
    n.op = Op::Param;
    n.param = &p;
    n.requires_grad = true;
    Var v = push(std::move(n));
    param_ids_.emplace(&p, v.id());
    return v;
}

const Array& Tape::value_of(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.value;
}

const Array& Tape::grad_of(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.param != nullptr ? n.param->grad : n.grad;
}

Array& Tape::grad_for_write(std::size_t id) {
    auto& n = nodes_[id];
    if (n.param != nullptr) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Array::zeros_like(n.param->value);
        return n.param->grad;
    }
    if (n.grad_epoch != epoch_) {
        if (n.grad.shape() != n.value.shape())
            n.grad = Array::zeros_like(n.value);
        else
            n.grad.fill(0.0);
        n.grad_epoch = epoch_;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    expect(loss.tape() == this, "backward: loss belongs to another tape");
    expect(value_of(loss.id()).size() == 1, "backward: loss must be a scalar");
    ++epoch_;
    grad_for_write(loss.id())[0] += 1.0;

    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        detail::Node& n = nodes_[k];
        if (!n.requires_grad || n.param != nullptr || n.grad_epoch != epoch_) continue;
        const Array& g = n.grad;
        const auto& pa = n.parents;
        auto wants = [&](std::size_t i) { return nodes_[pa[i]].requires_grad; };

        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::Affine: {
                const Array& x = value_of(pa[0]);
                const Array& W = value_of(pa[1]);
                const std::size_t n_out = W.rows(), n_in = W.cols();
                if (wants(1)) {
                    double* dW = grad_for_write(pa[1]).data();
                    for (std::size_t r = 0; r < n_out; ++r) {
                        const double gr = g[r];
                        if (gr == 0.0) continue;
                        double* row = dW + r * n_in;
                        for (std::size_t c = 0; c < n_in; ++c) row[c] += gr * x[c];
                    }
                }
                if (wants(2)) {
                    Array& db = grad_for_write(pa[2]);
                    for (std::size_t r = 0; r < n_out; ++r) db[r] += g[r];
                }
                if (wants(0)) {
                    double* dx = grad_for_write(pa[0]).data();
                    const double* w = W.data();
                    for (std::size_t r = 0; r < n_out; ++r) {
                        const double gr = g[r];
                        const double* row = w + r * n_in;
                        for (std::size_t c = 0; c < n_in; ++c) dx[c] += row[c] * gr;
                    }
                }
                break;
            }
            case Op::Sigmoid: {
                Array& dx = grad_for_write(pa[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value[i];
                    dx[i] += g[i] * s * (1.0 - s);
                }
                break;
            }
            case Op::Tanh: {
                Array& dx = grad_for_write(pa[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double t = n.value[i];
                    dx[i] += g[i] * (1.0 - t * t);
                }
                break;
            }
            case Op::Relu: {
                Array& dx = grad_for_write(pa[0]);
                const Array& x = value_of(pa[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0.0) dx[i] += g[i];
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (std::size_t p = 0; p < pa.size(); ++p) {
                    const std::size_t len = value_of(pa[p]).size();
                    if (wants(p)) {
                        Array& dx = grad_for_write(pa[p]);
                        for (std::size_t i = 0; i < len; ++i) dx[i] += g[off + i];
                    }
                    off += len;
                }
                break;
            }
            case Op::Slice: {
                Array& dx = grad_for_write(pa[0]);
                for (std::size_t i = 0; i < g.size(); ++i) dx[n.index + i] += g[i];
                break;
            }
            case Op::Embed: {
                Array& dt = grad_for_write(pa[0]);
                const std::size_t d = dt.cols();
                for (std::size_t i = 0; i < d; ++i) dt[n.index * d + i] += g[i];
                break;
            }
            case Op::Select: {
                grad_for_write(pa[0])[n.index] += g[0];
                break;
            }
            case Op::Add: {
                for (std::size_t p = 0; p < 2; ++p) {
                    if (!wants(p)) continue;
                    Array& dx = grad_for_write(pa[p]);
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                }
                break;
            }
            case Op::Sum: {
                for (std::size_t p = 0; p < pa.size(); ++p) {
                    if (!wants(p)) continue;
                    Array& dx = grad_for_write(pa[p]);
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                }
                break;
            }
            case Op::Scale: {
                Array& dx = grad_for_write(pa[0]);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.scalar;
                break;
            }
            case Op::Huber: {
                Array& dx = grad_for_write(pa[0]);
                const Array& pred = value_of(pa[0]);
                const double k = static_cast<double>(pred.size());
                const double delta = n.scalar;
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    const double r = pred[i] - n.aux[i];
                    dx[i] += g[0] * std::clamp(r, -delta, delta) / k;
                }
                break;
            }
            case Op::Bce: {
                const double p = value_of(pa[0])[0];
                const double t = n.scalar;
                if (p < kBceClamp || p > 1.0 - kBceClamp) break;  // clamp is flat
                grad_for_write(pa[0])[0] += g[0] * (-t / p + (1.0 - t) / (1.0 - p));
                break;
            }
            case Op::Lstm: {
                // value = [h'; c'], aux = [i, f, g, o, tanh(c')]
                const Array& x = value_of(pa[0]);
                const Array& h = value_of(pa[1]);
                const Array& c = value_of(pa[2]);
                const Array& W = value_of(pa[3]);
                const Array& U = value_of(pa[4]);
                const std::size_t H = h.size(), n_in = x.size();
                const double* ig = n.aux.data();
                const double* fg = ig + H;
                const double* gg = fg + H;
                const double* og = gg + H;
                const double* tc = og + H;
                std::vector<double> dpre(4 * H);
                std::vector<double> dc_prev(H);
                for (std::size_t j = 0; j < H; ++j) {
                    const double dh = g[j];
                    const double dc = g[H + j] + dh * og[j] * (1.0 - tc[j] * tc[j]);
                    dpre[j] = dc * gg[j] * ig[j] * (1.0 - ig[j]);
                    dpre[H + j] = dc * c[j] * fg[j] * (1.0 - fg[j]);
                    dpre[2 * H + j] = dc * ig[j] * (1.0 - gg[j] * gg[j]);
                    dpre[3 * H + j] = dh * tc[j] * og[j] * (1.0 - og[j]);
                    dc_prev[j] = dc * fg[j];
                }
                if (wants(2)) {
                    Array& dc = grad_for_write(pa[2]);
                    for (std::size_t j = 0; j < H; ++j) dc[j] += dc_prev[j];
                }
                if (wants(3)) {
                    double* dW = grad_for_write(pa[3]).data();
                    for (std::size_t r = 0; r < 4 * H; ++r) {
                        const double gr = dpre[r];
                        if (gr == 0.0) continue;
                        double* row = dW + r * n_in;
                        for (std::size_t k2 = 0; k2 < n_in; ++k2) row[k2] += gr * x[k2];
                    }
                }
                if (wants(4)) {
                    double* dU = grad_for_write(pa[4]).data();
                    for (std::size_t r = 0; r < 4 * H; ++r) {
                        const double gr = dpre[r];
                        if (gr == 0.0) continue;
                        double* row = dU + r * H;
                        for (std::size_t k2 = 0; k2 < H; ++k2) row[k2] += gr * h[k2];
                    }
                }
                if (wants(5)) {
                    Array& db = grad_for_write(pa[5]);
                    for (std::size_t r = 0; r < 4 * H; ++r) db[r] += dpre[r];
                }
                if (wants(0)) {
                    double* dx = grad_for_write(pa[0]).data();
                    const double* w = W.data();
                    for (std::size_t r = 0; r < 4 * H; ++r) {
                        const double gr = dpre[r];
                        const double* row = w + r * n_in;
                        for (std::size_t k2 = 0; k2 < n_in; ++k2) dx[k2] += row[k2] * gr;
                    }
                }
                if (wants(1)) {
                    double* dh = grad_for_write(pa[1]).data();
                    const double* u = U.data();
                    for (std::size_t r = 0; r < 4 * H; ++r) {
                        const double gr = dpre[r];
                        const double* row = u + r * H;
                        for (std::size_t k2 = 0; k2 < H; ++k2) dh[k2] += row[k2] * gr;
                    }
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------- ops

namespace {

detail::Node make_node(Tape& t, Op op, std::initializer_list<Var> parents) {
    detail::Node n;
    n.op = op;
    for (const Var& p : parents) {
        n.parents.push_back(p.id());
        n.requires_grad = n.requires_grad || t.node(p.id()).requires_grad;
    }
    return n;
}

template <typename F>
Var elementwise(Var x, Op op, F f) {
    Tape& t = same_tape({x});
    detail::Node n = make_node(t, op, {x});
    const Array& xv = x.value();
    n.value = Array::zeros_like(xv);
    for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = f(xv[i]);
    return t.push(std::move(n));
}

}  // namespace

Var affine(Var x, Var W, Var b) {
    Tape& t = same_tape({x, W, b});
    const Array& xv = x.value();
    const Array& Wv = W.value();
    const Array& bv = b.value();
    expect(is_vector(xv) && Wv.rank() == 2 && is_vector(bv), "affine: expects vector x, matrix W, vector b");
    expect(Wv.cols() == xv.size() && Wv.rows() == bv.size(), "affine: shape mismatch");
    detail::Node n = make_node(t, Op::Affine, {x, W, b});
    const std::size_t n_out = Wv.rows(), n_in = Wv.cols();
    n.value = Array({n_out});
    const double* w = Wv.data();
    const double* xp = xv.data();
    for (std::size_t r = 0; r < n_out; ++r) {
        const double* row = w + r * n_in;
        double acc = 0.0;
        for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * xp[c];
        n.value[r] = acc + bv[r];
    }
    return t.push(std::move(n));
}

Var sigmoid(Var x) { return elementwise(x, Op::Sigmoid, sigmoid_scalar); }
Var tanh_act(Var x) { return elementwise(x, Op::Tanh, [](double v) { return std::tanh(v); }); }
Var relu(Var x) { return elementwise(x, Op::Relu, [](double v) { return v > 0.0 ? v : 0.0; }); }

Var concat(std::span<const Var> xs) {
    expect(!xs.empty(), "concat: empty input list");
    Tape& t = same_tape({xs[0]});
    detail::Node n;
    n.op = Op::Concat;
    std::vector<double> out;
    for (const Var& v : xs) {
        same_tape({xs[0], v});
        expect(is_vector(v.value()), "concat: inputs must be vectors");
        n.parents.push_back(v.id());
        n.requires_grad = n.requires_grad || t.node(v.id()).requires_grad;
        const auto vals = v.value().values();
        out.insert(out.end(), vals.begin(), vals.end());
    }
    n.value = Array::vec(std::move(out));
    return t.push(std::move(n));
}

Var slice(Var x, std::size_t offset, std::size_t length) {
    Tape& t = same_tape({x});
    const Array& xv = x.value();
    expect(is_vector(xv) && offset + length <= xv.size(), "slice: range out of bounds");
    detail::Node n = make_node(t, Op::Slice, {x});
    n.index = offset;
    n.value = Array::vec(std::vector<double>(xv.data() + offset, xv.data() + offset + length));
    return t.push(std::move(n));
}

Var embed_lookup(Var table, std::size_t index) {
    Tape& t = same_tape({table});
    const Array& tv = table.value();
    expect(tv.rank() == 2, "embed_lookup: table must be a matrix");
    expect(index < tv.rows(), "embed_lookup: index out of range");
    detail::Node n = make_node(t, Op::Embed, {table});
    n.index = index;
    const std::size_t d = tv.cols();
    n.value = Array::vec(std::vector<double>(tv.data() + index * d, tv.data() + (index + 1) * d));
    return t.push(std::move(n));
}

Var select(Var x, std::size_t index) {
    Tape& t = same_tape({x});
    expect(index < x.value().size(), "select: index out of range");
    detail::Node n = make_node(t, Op::Select, {x});
    n.index = index;
    n.value = Array::scalar(x.value()[index]);
    return t.push(std::move(n));
}

Var add(Var a, Var b) {
    Tape& t = same_tape({a, b});
    expect(a.value().shape() == b.value().shape(), "add: shape mismatch");
    detail::Node n = make_node(t, Op::Add, {a, b});
    n.value = a.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += b.value()[i];
    return t.push(std::move(n));
}

Var sum(std::span<const Var> xs) {
    expect(!xs.empty(), "sum: empty input list");
    Tape& t = same_tape({xs[0]});
    detail::Node n;
    n.op = Op::Sum;
    n.value = Array::zeros_like(xs[0].value());
    for (const Var& v : xs) {
        same_tape({xs[0], v});
        expect(v.value().shape() == n.value.shape(), "sum: shape mismatch");
        n.parents.push_back(v.id());
        n.requires_grad = n.requires_grad || t.node(v.id()).requires_grad;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += v.value()[i];
    }
    return t.push(std::move(n));
}

Var scale(Var x, double factor) {
    Tape& t = same_tape({x});
    detail::Node n = make_node(t, Op::Scale, {x});
    n.scalar = factor;
    n.value = x.value();
    for (double& v : n.value.values()) v *= factor;
    return t.push(std::move(n));
}

LstmOut lstm_cell(Var x, Var h, Var c, const LstmWeights& w) {
    Tape& t = same_tape({x, h, c, w.W, w.U, w.b});
    const Array& xv = x.value();
    const Array& hv = h.value();
    const Array& cv = c.value();
    const Array& Wv = w.W.value();
    const Array& Uv = w.U.value();
    const Array& bv = w.b.value();
    const std::size_t H = hv.size(), n_in = xv.size();
    expect(cv.size() == H, "lstm_cell: h and c sizes differ");
    expect(Wv.rank() == 2 && Wv.rows() == 4 * H && Wv.cols() == n_in, "lstm_cell: W shape mismatch");
    expect(Uv.rank() == 2 && Uv.rows() == 4 * H && Uv.cols() == H, "lstm_cell: U shape mismatch");
    expect(bv.size() == 4 * H, "lstm_cell: b shape mismatch");

    detail::Node n = make_node(t, Op::Lstm, {x, h, c, w.W, w.U, w.b});
    std::vector<double> pre(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        const double* wr = Wv.data() + r * n_in;
        const double* ur = Uv.data() + r * H;
        double acc = bv[r];
        for (std::size_t k = 0; k < n_in; ++k) acc += wr[k] * xv[k];
        for (std::size_t k = 0; k < H; ++k) acc += ur[k] * hv[k];
        pre[r] = acc;
    }
    n.aux = Array({5 * H});
    n.value = Array({2 * H});
    for (std::size_t j = 0; j < H; ++j) {
        const double ig = sigmoid_scalar(pre[j]);
        const double fg = sigmoid_scalar(pre[H + j]);
        const double gg = std::tanh(pre[2 * H + j]);
        const double og = sigmoid_scalar(pre[3 * H + j]);
        const double cn = fg * cv[j] + ig * gg;
        const double tc = std::tanh(cn);
        n.aux[j] = ig;
        n.aux[H + j] = fg;
        n.aux[2 * H + j] = gg;
        n.aux[3 * H + j] = og;
        n.aux[4 * H + j] = tc;
        n.value[j] = og * tc;
        n.value[H + j] = cn;
    }
    Var both = t.push(std::move(n));
    return {slice(both, 0, H), slice(both, H, H)};
}

Var huber_loss(Var pred, const Array& target, double delta) {
    Tape& t = same_tape({pred});
    const Array& pv = pred.value();
    expect(pv.size() == target.size() && pv.size() > 0, "huber_loss: shape mismatch");
    expect(delta > 0.0, "huber_loss: delta must be positive");
    detail::Node n = make_node(t, Op::Huber, {pred});
    n.scalar = delta;
    n.aux = target;
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double r = std::abs(pv[i] - target[i]);
        acc += r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
    }
    n.value = Array::scalar(acc / static_cast<double>(pv.size()));
    return t.push(std::move(n));
}

Var bce_loss(Var pred, double target) {
    Tape& t = same_tape({pred});
    expect(pred.value().size() == 1, "bce_loss: prediction must be a scalar");
    detail::Node n = make_node(t, Op::Bce, {pred});
    n.scalar = target;
    const double p = std::clamp(pred.value()[0], kBceClamp, 1.0 - kBceClamp);
    n.value = Array::scalar(-(target * std::log(p) + (1.0 - target) * std::log(1.0 - p)));
    return t.push(std::move(n));
}

}  // namespace bsw::ad
