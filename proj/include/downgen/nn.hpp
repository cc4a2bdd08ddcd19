#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace downgen::nn {

/// Dense row-major float64 tensor. Images use [N, C, H, W]; features [N, F].
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor filled(std::vector<std::size_t> shape, double value);
    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t k) const { return shape.at(k); }
    std::size_t rank() const { return shape.size(); }
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

/// Named trainable tensor with its gradient buffer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Ordered parameter collection with stable addresses.
class ParamStore {
public:
    Param& add(const std::string& name, Tensor value);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Param& operator[](std::size_t k) { return *params_[k]; }
    const Param& operator[](std::size_t k) const { return *params_[k]; }

    void zero_grad();
    std::size_t total_values() const;
    /// Throws NumericalError if any value or gradient is non-finite.
    void check_finite() const;

private:
    std::vector<std::unique_ptr<Param>> params_;
};

class Graph;

/// Handle to a node on a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const { return value().shape; }
};

/// Reverse-mode tape. With record = false ops only compute values, which is
/// what inference paths use.
class Graph {
public:
    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(Tensor value);
    Var param(Param& p);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient buffer of a node (allocated on first use).
    Tensor& grad(Var v);
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    bool recording() const { return record_; }

    /// Seeds d(loss)/d(loss) = 1, runs the tape backwards and accumulates
    /// parameter gradients into Param::grad.
    void backward(Var loss);

    /// Closure run during backward; receives the op's own output handle.
    using Backward = std::function<void(Var self)>;

    /// Adds an op node. `parents` decide whether a gradient is needed; the
    /// backward closure is stored only when recording.
    Var push(Tensor value, std::initializer_list<Var> parents, Backward back);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward back;
        Param* param = nullptr;
        bool needs_grad = false;
    };
    bool record_;
    std::deque<Node> nodes_;
};

// ---- ops ------------------------------------------------------------------

/// 3x3 convolution with zero "same" padding; stride 1 or 2 (Ho = ceil(H / stride)).
/// w: [Co, Ci, 3, 3], b: [Co].
Var conv2d(Var x, Var w, Var b, int stride = 1);
/// Nearest-neighbour resize to (h, w).
Var upsample_to(Var x, std::size_t h, std::size_t w);
Var add(Var a, Var b);
Var silu(Var x);
/// (1 + s) * x + b with s, b: [N, C] broadcast over space.
Var film(Var x, Var s, Var b);
/// x: [N, Fi], w: [Fo, Fi], b: [Fo].
Var dense(Var x, Var w, Var b);
/// Concatenate [N, C1, H, W] and [N, C2, H, W] along channels.
Var concat_channels(Var a, Var b);
/// Concatenate feature matrices [N, F1], [N, F2].
Var concat_features(Var a, Var b);
/// Columns [begin, end) of a feature matrix.
Var slice_features(Var x, std::size_t begin, std::size_t end);
/// Mean over H and W: [N, C, H, W] -> [N, C].
Var spatial_mean(Var x);
/// Multiply sample n by c[n].
Var scale_per_sample(Var x, const std::vector<double>& c);
/// a * x + y for constants a (scalar); x and y same shape.
Var axpy(double a, Var x, Var y);
/// sum_n w[n] * mean_{elements of n} (pred - target)^2 / N. Returns a [1] tensor.
Var weighted_mse(Var pred, Var target, const std::vector<double>& w);

// ---- initialisation -------------------------------------------------------

/// Truncated normal (cut at two standard deviations) from a seeded generator.
Tensor truncated_normal(std::vector<std::size_t> shape, double std, std::uint64_t seed);

}  // namespace downgen::nn
