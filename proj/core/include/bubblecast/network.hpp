#pragma once

#include "bubblecast/diff_geometry.hpp"
#include "bubblecast/diffcore.hpp"
#include "bubblecast/geometry.hpp"
#include "bubblecast/span.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace bubblecast::network {

using geometry::GeometryMode;
using Vector = Eigen::VectorXd;

struct ModelConfig {
    int feature_dim = 3;
    int hidden_dim = 8;
    int lookback = 5;   ///< tau, days of history
    int lookahead = 5;  ///< T, days predicted
    int max_bubbles = -1;  ///< negative selects floor(T / 2)
    GeometryMode geometry_mode = GeometryMode::hyperbolic;
    int nms_threshold = 2;  ///< candidates sharing >= this many days with an accepted span are dropped
    bool attention_enabled = true;

    [[nodiscard]] int max_bubble_count() const noexcept {
        return max_bubbles < 0 ? lookahead / 2 : max_bubbles;
    }
    [[nodiscard]] int count_classes() const noexcept { return max_bubble_count() + 1; }

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/**
 * Parameter names registered by init_params. Encoder gates g in {z, r, h}
 * use "enc.W_g" (hidden x hidden), "enc.U_g" (hidden x feature), "enc.b_g";
 * the decoder GRU uses "dec.W_g", "dec.b_g"; the span heads are
 * "span.W_start" / "span.W_end" (1 x hidden); the count MLP is "count.W1",
 * "count.b1", "count.W2", "count.b2"; attention is "attn.W".
 */
[[nodiscard]] diff::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// All-zero parameters of the right shapes.
[[nodiscard]] diff::ParamStore zero_params(const ModelConfig& cfg);

/// Throws DataError if a parameter is missing, mis-shaped, or non-finite.
void validate_params(const diff::ParamStore& params, const ModelConfig& cfg);

struct EncoderOutput {
    std::vector<Vector> hidden_states;  ///< on the ball in hyperbolic mode
    Vector info;                        ///< u_i, tangent space at the origin
    Vector attention;                   ///< gamma, sums to one
};

struct SpanProbabilities {
    Vector p_start;
    Vector p_end;
};

struct CountPrediction {
    int count = 0;
    Vector probs;
};

struct ForwardResult {
    EncoderOutput encoder;
    SpanProbabilities spans;
    CountPrediction count;
    SpanList extracted;
};

// ---------------------------------------------------------------------------
// Graph builders, shared by inference and training.

struct EncoderVars {
    std::vector<diff::Var> hidden_states;
    diff::Var info;
    diff::Var attention;
};

struct ForwardVars {
    EncoderVars encoder;
    diff::Var p_start;      ///< T x 1
    diff::Var p_end;        ///< T x 1
    diff::Var count_probs;  ///< (B_max + 1) x 1
};

/// One HGRU step: h_prev and x are points (on the ball in hyperbolic mode).
[[nodiscard]] diff::Var hgru_cell(diff::Graph& g, diff::Var h_prev, diff::Var x,
                                  const diff::DiffGeometry& geo);

[[nodiscard]] EncoderVars encode(diff::Graph& g, std::span<const Vector> features,
                                 const ModelConfig& cfg);

/// Returns {p_start, p_end} as T x 1 nodes.
[[nodiscard]] std::pair<diff::Var, diff::Var> span_probs(diff::Graph& g, diff::Var info,
                                                         const ModelConfig& cfg);

[[nodiscard]] diff::Var count_probs(diff::Graph& g, diff::Var info, const ModelConfig& cfg);

[[nodiscard]] ForwardVars build_forward(diff::Graph& g, std::span<const Vector> features,
                                        const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Value-level API.

[[nodiscard]] Vector hgru_cell(const Vector& h_prev, const Vector& x,
                               const diff::ParamStore& params, GeometryMode mode);

[[nodiscard]] EncoderOutput encode(std::span<const Vector> features,
                                   const diff::ParamStore& params, const ModelConfig& cfg);

[[nodiscard]] SpanProbabilities span_probs(const Vector& info, const diff::ParamStore& params,
                                           const ModelConfig& cfg);

[[nodiscard]] CountPrediction count_bubbles(const Vector& info, const diff::ParamStore& params,
                                            const ModelConfig& cfg);

/// Index of the largest entry; ties go to the smaller index.
[[nodiscard]] int argmax_first(const Vector& values);

/**
 * Greedy non-maximum suppression over all T(T-1)/2 candidate spans (s < e),
 * scored p_start[s] * p_end[e]. Candidates are visited by descending score,
 * then smaller start, then smaller end; a candidate is dropped when it shares
 * at least `threshold` days with an accepted span. Stops after `max_spans`
 * acceptances. The result is sorted by start day.
 */
[[nodiscard]] SpanList extract_spans(const SpanProbabilities& probs, int max_spans, int threshold);

[[nodiscard]] ForwardResult forward(std::span<const Vector> features,
                                    const diff::ParamStore& params, const ModelConfig& cfg);

}  // namespace bubblecast::network
