#include "bubblecast/diffcore.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/scalar_math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bubblecast::diff {

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::add(std::string name, Tensor init) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    Tensor zero = Tensor::Zero(init.rows(), init.cols());
    entries_.push_back(Entry{std::move(name), std::move(init), std::move(zero)});
    return entries_.back().value;
}

bool ParamStore::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

std::size_t ParamStore::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

const Tensor& ParamStore::value(std::string_view name) const { return entries_[index_of(name)].value; }
Tensor& ParamStore::value(std::string_view name) { return entries_[index_of(name)].value; }
const Tensor& ParamStore::grad(std::string_view name) const { return entries_[index_of(name)].grad; }

std::size_t ParamStore::coefficient_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.grad.setZero(e.value.rows(), e.value.cols());
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph_->value(*this); }

double Var::scalar() const {
    const Tensor& v = value();
    if (v.size() != 1) throw ShapeError("Var::scalar on a non-scalar node");
    return v(0, 0);
}

void Graph::check_owner(Var v) const {
    if (v.graph_ != this || v.id_ >= nodes_.size()) {
        throw std::invalid_argument("variable does not belong to this graph");
    }
}

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, "constant", nullptr});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::scalar(double value) { return constant(Tensor::Constant(1, 1, value)); }

Var Graph::param(std::string_view name) {
    if (params_ == nullptr) throw std::logic_error("graph has no parameter store");
    const std::size_t idx = params_->index_of(name);
    nodes_.push_back(Node{params_->entries()[idx].value, {}, "param", nullptr,
                          static_cast<std::int64_t>(idx)});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::make(Tensor value, const char* op, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, op, std::move(backward)});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor& Graph::value(Var v) const {
    check_owner(v);
    return nodes_[v.id_].value;
}

const Tensor& Graph::grad(Var v) const {
    check_owner(v);
    return nodes_[v.id_].grad;
}

Tensor& Graph::grad_ref(Var v) { return nodes_[v.id_].grad; }

void Graph::backward(Var loss) {
    check_owner(loss);
    const Node& root = nodes_[loss.id_];
    if (root.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    if (!std::isfinite(root.value(0, 0))) {
        throw NumericError("backward: non-finite loss at node " + std::to_string(loss.id_));
    }
    for (std::uint32_t i = 0; i <= loss.id_; ++i) {
        nodes_[i].grad.setZero(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
    nodes_[loss.id_].grad(0, 0) = 1.0;

    for (std::int64_t i = loss.id_; i >= 0; --i) {
        Node& node = nodes_[static_cast<std::size_t>(i)];
        if (!node.value.allFinite() || !node.grad.allFinite()) {
            throw NumericError("backward: non-finite value or gradient at node " +
                               std::to_string(i) + " (" + node.op + ")");
        }
        if (node.backward) node.backward(*this, node.grad);
        if (node.param >= 0 && grad_sink_ != nullptr) {
            grad_sink_->entries()[static_cast<std::size_t>(node.param)].grad += node.grad;
        }
    }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Graph& owner(Var a) {
    if (a.graph() == nullptr) throw std::invalid_argument("empty variable");
    return *a.graph();
}

Graph& owner(Var a, Var b) {
    if (a.graph() != b.graph() || a.graph() == nullptr) {
        throw std::invalid_argument("operands belong to different graphs");
    }
    return *a.graph();
}

void same_shape(Var a, Var b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

void require_scalar(Var s, const char* op) {
    if (s.value().size() != 1) throw ShapeError(std::string(op) + ": expected a scalar operand");
}

void require_column(Var v, const char* op) {
    if (v.cols() != 1) throw ShapeError(std::string(op) + ": expected a column vector");
}

}  // namespace

Var add(Var a, Var b) {
    Graph& g = owner(a, b);
    same_shape(a, b, "add");
    return g.make(a.value() + b.value(), "add", [a, b](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og;
        g.grad_ref(b) += og;
    });
}

Var sub(Var a, Var b) {
    Graph& g = owner(a, b);
    same_shape(a, b, "sub");
    return g.make(a.value() - b.value(), "sub", [a, b](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og;
        g.grad_ref(b) -= og;
    });
}

Var mul(Var a, Var b) {
    Graph& g = owner(a, b);
    same_shape(a, b, "mul");
    return g.make(a.value().cwiseProduct(b.value()), "mul", [a, b](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(b.value());
        g.grad_ref(b) += og.cwiseProduct(a.value());
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double k) {
    Graph& g = owner(a);
    return g.make(a.value() * k, "scale",
                  [a, k](Graph& g, const Tensor& og) { g.grad_ref(a) += og * k; });
}

Var shift(Var a, double c) {
    Graph& g = owner(a);
    return g.make((a.value().array() + c).matrix(), "shift",
                  [a](Graph& g, const Tensor& og) { g.grad_ref(a) += og; });
}

Var scale_by(Var a, Var s) {
    Graph& g = owner(a, s);
    require_scalar(s, "scale_by");
    const double k = s.scalar();
    return g.make(a.value() * k, "scale_by", [a, s, k](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og * k;
        g.grad_ref(s)(0, 0) += og.cwiseProduct(a.value()).sum();
    });
}

Var div_by(Var a, Var s) {
    Graph& g = owner(a, s);
    require_scalar(s, "div_by");
    const double d = s.scalar();
    if (d == 0.0) throw std::domain_error("div_by: division by zero");
    return g.make(a.value() / d, "div_by", [a, s, d](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og / d;
        g.grad_ref(s)(0, 0) -= og.cwiseProduct(a.value()).sum() / (d * d);
    });
}

Var matvec(Var m, Var v) {
    Graph& g = owner(m, v);
    require_column(v, "matvec");
    if (m.cols() != v.rows()) {
        throw ShapeError("matvec: matrix " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " times vector of length " +
                         std::to_string(v.rows()));
    }
    return g.make(m.value() * v.value(), "matvec", [m, v](Graph& g, const Tensor& og) {
        g.grad_ref(m).noalias() += og * v.value().transpose();
        g.grad_ref(v).noalias() += m.value().transpose() * og;
    });
}

Var dot(Var a, Var b) {
    Graph& g = owner(a, b);
    same_shape(a, b, "dot");
    const double d = a.value().cwiseProduct(b.value()).sum();
    return g.make(Tensor::Constant(1, 1, d), "dot", [a, b](Graph& g, const Tensor& og) {
        const double k = og(0, 0);
        g.grad_ref(a) += k * b.value();
        g.grad_ref(b) += k * a.value();
    });
}

Var squared_norm(Var a) {
    Graph& g = owner(a);
    return g.make(Tensor::Constant(1, 1, a.value().squaredNorm()), "squared_norm",
                  [a](Graph& g, const Tensor& og) { g.grad_ref(a) += 2.0 * og(0, 0) * a.value(); });
}

Var norm(Var a) {
    Graph& g = owner(a);
    const double n = a.value().norm();
    return g.make(Tensor::Constant(1, 1, n), "norm", [a, n](Graph& g, const Tensor& og) {
        if (n > 0.0) g.grad_ref(a) += (og(0, 0) / n) * a.value();
    });
}

Var sum(Var a) {
    Graph& g = owner(a);
    return g.make(Tensor::Constant(1, 1, a.value().sum()), "sum",
                  [a](Graph& g, const Tensor& og) { g.grad_ref(a).array() += og(0, 0); });
}

Var concat(Var a, Var b) {
    Graph& g = owner(a, b);
    require_column(a, "concat");
    require_column(b, "concat");
    Tensor out(a.rows() + b.rows(), 1);
    out << a.value(), b.value();
    const Eigen::Index na = a.rows();
    const Eigen::Index nb = b.rows();
    return g.make(std::move(out), "concat", [a, b, na, nb](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.topRows(na);
        g.grad_ref(b) += og.bottomRows(nb);
    });
}

Var stack(std::span<const Var> scalars) {
    if (scalars.empty()) throw ShapeError("stack: no operands");
    Graph& g = owner(scalars.front());
    Tensor out(static_cast<Eigen::Index>(scalars.size()), 1);
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        owner(scalars.front(), scalars[i]);
        require_scalar(scalars[i], "stack");
        out(static_cast<Eigen::Index>(i), 0) = scalars[i].scalar();
    }
    std::vector<Var> parts(scalars.begin(), scalars.end());
    return g.make(std::move(out), "stack", [parts = std::move(parts)](Graph& g, const Tensor& og) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
            g.grad_ref(parts[i])(0, 0) += og(static_cast<Eigen::Index>(i), 0);
        }
    });
}

Var element(Var v, Eigen::Index i) {
    Graph& g = owner(v);
    require_column(v, "element");
    if (i < 0 || i >= v.rows()) throw ShapeError("element: index out of range");
    return g.make(Tensor::Constant(1, 1, v.value()(i, 0)), "element",
                  [v, i](Graph& g, const Tensor& og) { g.grad_ref(v)(i, 0) += og(0, 0); });
}

Var tanh(Var a) {
    Graph& g = owner(a);
    Tensor t = a.value().array().tanh().matrix();
    Tensor d = (1.0 - t.array().square()).matrix();
    return g.make(std::move(t), "tanh", [a, d = std::move(d)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(d);
    });
}

Var sigmoid(Var a) {
    Graph& g = owner(a);
    Tensor s = a.value().unaryExpr([](double x) { return scalar::sigmoid(x); });
    Tensor d = (s.array() * (1.0 - s.array())).matrix();
    return g.make(std::move(s), "sigmoid", [a, d = std::move(d)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(d);
    });
}

Var atanh(Var a) {
    Graph& g = owner(a);
    if ((a.value().array().abs() >= 1.0).any()) throw std::domain_error("atanh: |x| >= 1");
    Tensor d = (1.0 / (1.0 - a.value().array().square())).matrix();
    return g.make(a.value().array().atanh().matrix(), "atanh",
                  [a, d = std::move(d)](Graph& g, const Tensor& og) {
                      g.grad_ref(a) += og.cwiseProduct(d);
                  });
}

Var log(Var a) {
    Graph& g = owner(a);
    if ((a.value().array() <= 0.0).any()) throw std::domain_error("log: x <= 0");
    return g.make(a.value().array().log().matrix(), "log", [a](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseQuotient(a.value());
    });
}

Var exp(Var a) {
    Graph& g = owner(a);
    Tensor e = a.value().array().exp().matrix();
    Tensor copy = e;
    return g.make(std::move(e), "exp", [a, copy = std::move(copy)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(copy);
    });
}

Var sqrt(Var a) {
    Graph& g = owner(a);
    if ((a.value().array() < 0.0).any()) throw std::domain_error("sqrt: x < 0");
    Tensor r = a.value().array().sqrt().matrix();
    Tensor d = r.unaryExpr([](double x) { return x > 0.0 ? 0.5 / x : 0.0; });
    return g.make(std::move(r), "sqrt", [a, d = std::move(d)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(d);
    });
}

Var pow(Var a, double exponent) {
    Graph& g = owner(a);
    if ((a.value().array() < 0.0).any()) throw std::domain_error("pow: negative base");
    Tensor out = a.value().array().pow(exponent).matrix();
    Tensor d = a.value().unaryExpr([exponent](double x) {
        if (exponent == 1.0) return 1.0;
        return x == 0.0 ? (exponent > 1.0 ? 0.0 : HUGE_VAL) : exponent * std::pow(x, exponent - 1.0);
    });
    return g.make(std::move(out), "pow", [a, d = std::move(d)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(d);
    });
}

Var clamp(Var a, double lo, double hi) {
    Graph& g = owner(a);
    Tensor out = a.value().cwiseMax(lo).cwiseMin(hi);
    Tensor mask = a.value().unaryExpr([lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
    return g.make(std::move(out), "clamp", [a, mask = std::move(mask)](Graph& g, const Tensor& og) {
        g.grad_ref(a) += og.cwiseProduct(mask);
    });
}

Var softmax(Var a) {
    Graph& g = owner(a);
    require_column(a, "softmax");
    const double m = a.value().maxCoeff();
    Tensor e = (a.value().array() - m).exp().matrix();
    e /= e.sum();
    Tensor s = e;
    return g.make(std::move(e), "softmax", [a, s = std::move(s)](Graph& g, const Tensor& og) {
        const double inner = og.cwiseProduct(s).sum();
        g.grad_ref(a) += (s.array() * (og.array() - inner)).matrix();
    });
}

Var tanh_ratio(Var s) {
    Graph& g = owner(s);
    require_scalar(s, "tanh_ratio");
    const double x = s.scalar();
    const double d = scalar::tanh_ratio_derivative(x);
    return g.make(Tensor::Constant(1, 1, scalar::tanh_ratio(x)), "tanh_ratio",
                  [s, d](Graph& g, const Tensor& og) { g.grad_ref(s)(0, 0) += og(0, 0) * d; });
}

Var atanh_ratio(Var s) {
    Graph& g = owner(s);
    require_scalar(s, "atanh_ratio");
    const double x = s.scalar();
    if (x < 0.0) throw std::domain_error("atanh_ratio: negative argument");
    const double d = scalar::atanh_ratio_derivative(x);
    return g.make(Tensor::Constant(1, 1, scalar::atanh_ratio(x)), "atanh_ratio",
                  [s, d](Graph& g, const Tensor& og) { g.grad_ref(s)(0, 0) += og(0, 0) * d; });
}

Var project_to_ball(Var a, double max_norm) {
    Graph& g = owner(a);
    require_column(a, "project_to_ball");
    const double n = a.value().norm();
    if (n <= max_norm) {
        return g.make(a.value(), "project_to_ball",
                      [a](Graph& g, const Tensor& og) { g.grad_ref(a) += og; });
    }
    const double k = max_norm / n;
    Tensor unit = a.value() / n;
    return g.make(a.value() * k, "project_to_ball",
                  [a, k, unit = std::move(unit)](Graph& g, const Tensor& og) {
                      const double along = og.cwiseProduct(unit).sum();
                      g.grad_ref(a) += k * (og - along * unit);
                  });
}

// ---------------------------------------------------------------------------

double finite_diff_check(const LossBuilder& loss, ParamStore& params, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw std::invalid_argument("finite_diff_check: step must be positive and finite");
    }
    params.zero_grad();
    {
        Graph g(&params);
        Var l = loss(g);
        g.backward(l);
    }
    auto evaluate = [&]() {
        Graph g(&params);
        const double v = loss(g).scalar();
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss evaluation");
        return v;
    };

    double worst = 0.0;
    for (auto& entry : params.entries()) {
        for (Eigen::Index i = 0; i < entry.value.size(); ++i) {
            double& coeff = entry.value.data()[i];
            const double saved = coeff;
            coeff = saved + step;
            const double up = evaluate();
            coeff = saved - step;
            const double down = evaluate();
            coeff = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = entry.grad.data()[i];
            const double rel =
                std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace bubblecast::diff
