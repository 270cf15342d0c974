#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bsw::ad {

/// Dense row-major array of doubles. Rank 1 (vector) and rank 2 (matrix) are
/// the only shapes the network uses; scalars are vectors of length 1.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<std::size_t> shape, double fill = 0.0);
    Array(std::vector<std::size_t> shape, std::vector<double> data);

    static Array vec(std::vector<double> data);
    static Array scalar(double v) { return vec({v}); }
    static Array zeros_like(const Array& other) { return Array(other.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Array&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// A trainable array and its accumulated gradient.
struct Parameter {
    std::string name;
    Array value;
    Array grad;

    Parameter() = default;
    Parameter(std::string n, Array v);

    void zero_grad() { grad.fill(0.0); }
};

enum class Op : std::uint8_t {
    Constant,
    Param,
    Affine,
    Sigmoid,
    Tanh,
    Relu,
    Concat,
    Slice,
    Embed,
    Lstm,
    Huber,
    Bce,
    Select,
    Add,
    Sum,
    Scale,
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the
/// tape lives.
class Var {
public:
    Var() = default;

    const Array& value() const;
    /// Gradient from the most recent backward pass. For parameter nodes this
    /// is the parameter's accumulated gradient.
    const Array& grad() const;
    std::size_t size() const { return value().size(); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

namespace detail {

struct Node {
    Op op = Op::Constant;
    std::vector<std::size_t> parents;
    Array value;
    Array grad;
    Parameter* param = nullptr;
    std::size_t index = 0;   // Embed row, Select element, Slice offset
    double scalar = 0.0;     // Huber delta, Bce target, Scale factor
    Array aux;               // Huber target / Lstm gate cache
    bool requires_grad = false;
    std::uint64_t grad_epoch = 0;
};

}  // namespace detail

/// Append-only record of a forward computation. Creation order is a
/// topological order, so backward walks the node list in reverse.
///
/// A tape (and its nodes) belongs to one thread at a time. Parameter values
/// are only read during forward; backward writes parameter gradients.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Array value);
    /// Leaf bound to an external parameter. Repeated calls with the same
    /// parameter return the same node.
    Var param(Parameter& p);

    /// Accumulates d(loss)/d(param) into every reachable parameter's grad.
    /// Intermediate gradients are reset on every call; parameter gradients
    /// keep accumulating until zeroed by the caller.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

    // Internal interface used by the op implementations.
    Var push(detail::Node node);
    detail::Node& node(std::size_t id) { return nodes_[id]; }
    const detail::Node& node(std::size_t id) const { return nodes_[id]; }
    const Array& value_of(std::size_t id) const;
    const Array& grad_of(std::size_t id) const;

private:
    Array& grad_for_write(std::size_t id);

    std::vector<detail::Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_ids_;
    std::uint64_t epoch_ = 0;
};

inline void backward(Var loss) { loss.tape()->backward(loss); }

/// y = W·x + b with W of shape [n_out, n_in].
Var affine(Var x, Var W, Var b);
Var sigmoid(Var x);
Var tanh_act(Var x);
Var relu(Var x);
Var concat(std::span<const Var> xs);
Var slice(Var x, std::size_t offset, std::size_t length);
/// Row `index` of an embedding table of shape [V, D].
Var embed_lookup(Var table, std::size_t index);
/// Element `index` of a vector, as a length-1 vector.
Var select(Var x, std::size_t index);
Var add(Var a, Var b);
Var sum(std::span<const Var> xs);
Var scale(Var x, double factor);

struct LstmWeights {
    Var W;  // [4H, n_in], gate blocks ordered input, forget, cell, output
    Var U;  // [4H, H]
    Var b;  // [4H]
};

struct LstmOut {
    Var h;
    Var c;
};

LstmOut lstm_cell(Var x, Var h, Var c, const LstmWeights& w);

/// Mean over elements of the Huber penalty of (pred - target).
Var huber_loss(Var pred, const Array& target, double delta);

/// Binary cross-entropy of a length-1 probability against a 0/1 target.
/// The probability is clamped to [1e-7, 1 - 1e-7] before the log.
Var bce_loss(Var pred, double target);

inline constexpr double kBceClamp = 1e-7;

}  // namespace bsw::ad
