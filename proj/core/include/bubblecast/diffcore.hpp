#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bubblecast::diff {

/// Scalars are 1x1, vectors are n x 1, matrices are r x c.
using Tensor = Eigen::MatrixXd;

/**
 * Named trainable tensors with a stable (insertion) iteration order.
 * Each entry carries a gradient buffer of the same shape.
 */
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    /// Registers a parameter; throws std::invalid_argument on a duplicate name.
    Tensor& add(std::string name, Tensor init);

    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::size_t index_of(std::string_view name) const;

    [[nodiscard]] const Tensor& value(std::string_view name) const;
    [[nodiscard]] Tensor& value(std::string_view name);
    [[nodiscard]] const Tensor& grad(std::string_view name) const;

    [[nodiscard]] std::span<Entry> entries() noexcept { return entries_; }
    [[nodiscard]] std::span<const Entry> entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    /// Total number of scalar coefficients.
    [[nodiscard]] std::size_t coefficient_count() const;

    void zero_grad();

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
public:
    Var() = default;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] double scalar() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] Graph* graph() const noexcept { return graph_; }
    [[nodiscard]] std::uint32_t id() const noexcept { return id_; }

private:
    friend class Graph;
    Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::uint32_t id_ = 0;
};

/**
 * A define-by-run computation graph. Nodes are appended in evaluation order,
 * so creation order is a topological order and backward() walks it in reverse.
 * A graph is confined to one thread; build a fresh one per training step.
 */
class Graph {
public:
    using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

    /// Training graph: parameter leaves feed gradients back into `params`.
    explicit Graph(ParamStore* params = nullptr) : params_(params), grad_sink_(params) {}
    /// Inference graph: parameters are read, never written.
    explicit Graph(const ParamStore& params) : params_(&params), grad_sink_(nullptr) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    [[nodiscard]] Var constant(Tensor value);
    [[nodiscard]] Var scalar(double value);

    /// Leaf bound to a registered parameter; backward() accumulates into its grad.
    [[nodiscard]] Var param(std::string_view name);

    /// Appends an interior node. Used by the op library.
    [[nodiscard]] Var make(Tensor value, const char* op, Backward backward);

    /**
     * Reverse-mode sweep from a scalar loss. Node gradients are reset first, so
     * repeated calls are idempotent on nodes; parameter gradients accumulate
     * and must be cleared by the caller (ParamStore::zero_grad).
     * Throws ShapeError for a non-scalar loss and NumericError when a
     * non-finite value or gradient is met (naming the node).
     */
    void backward(Var loss);

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] const Tensor& grad(Var v) const;

    /// Adds into the gradient buffer of `v` during a backward sweep.
    Tensor& grad_ref(Var v);

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        const char* op;
        Backward backward;
        std::int64_t param = -1;
    };

    void check_owner(Var v) const;

    const ParamStore* params_;
    ParamStore* grad_sink_;
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Op library. All ops are pure: they never modify their operands.
// Shape mismatches throw ShapeError; domain violations throw std::domain_error.

[[nodiscard]] Var add(Var a, Var b);
[[nodiscard]] Var sub(Var a, Var b);
[[nodiscard]] Var mul(Var a, Var b);  ///< elementwise
[[nodiscard]] Var neg(Var a);
[[nodiscard]] Var scale(Var a, double k);
[[nodiscard]] Var shift(Var a, double c);  ///< a + c elementwise
[[nodiscard]] Var scale_by(Var a, Var s);  ///< a * s for a 1x1 node s
[[nodiscard]] Var div_by(Var a, Var s);    ///< a / s for a 1x1 node s
[[nodiscard]] Var matvec(Var m, Var v);
[[nodiscard]] Var dot(Var a, Var b);
[[nodiscard]] Var squared_norm(Var a);
[[nodiscard]] Var norm(Var a);  ///< gradient taken as 0 at the origin
[[nodiscard]] Var sum(Var a);
[[nodiscard]] Var concat(Var a, Var b);  ///< vertical stack of column vectors
[[nodiscard]] Var stack(std::span<const Var> scalars);
[[nodiscard]] Var element(Var v, Eigen::Index i);

[[nodiscard]] Var tanh(Var a);
[[nodiscard]] Var sigmoid(Var a);
[[nodiscard]] Var atanh(Var a);  ///< throws for |x| >= 1
[[nodiscard]] Var log(Var a);    ///< throws for x <= 0
[[nodiscard]] Var exp(Var a);
[[nodiscard]] Var sqrt(Var a);   ///< throws for x < 0
[[nodiscard]] Var pow(Var a, double exponent);  ///< requires a >= 0
[[nodiscard]] Var clamp(Var a, double lo, double hi);
[[nodiscard]] Var softmax(Var a);

/// tanh(s)/s and atanh(s)/s on a 1x1 node; smooth at 0, atanh clamped near 1.
[[nodiscard]] Var tanh_ratio(Var s);
[[nodiscard]] Var atanh_ratio(Var s);

/// Radial clamp to the given norm (identity inside).
[[nodiscard]] Var project_to_ball(Var a, double max_norm);

// ---------------------------------------------------------------------------

/**
 * Central-difference gradient check. Evaluates `loss` (which must rebuild its
 * graph from the current parameter values) at +/- step per coordinate and
 * compares with the analytic gradient from one backward pass.
 * Returns max_i |g_i - fd_i| / (|g_i| + |fd_i| + 1e-8).
 */
using LossBuilder = std::function<Var(Graph&)>;
[[nodiscard]] double finite_diff_check(const LossBuilder& loss, ParamStore& params, double step);

}  // namespace bubblecast::diff
