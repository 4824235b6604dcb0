#pragma once

// Independent references for the network: a textbook GRU step and an
// exhaustive greedy span selector.

#include "bubblecast/diffcore.hpp"
#include "bubblecast/network.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace oracle {

using bubblecast::BubbleSpan;
using bubblecast::SpanList;
using bubblecast::network::SpanProbabilities;
using Vector = Eigen::VectorXd;

inline Vector sigmoid(const Vector& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); }

// Textbook GRU: h' = (1 - z) * h + z * tanh(W (r * h) + U x + b).
inline Vector textbook_gru(const Vector& h, const Vector& x, const bubblecast::diff::ParamStore& ps) {
    const Vector z = sigmoid(ps.value("enc.W_z") * h + ps.value("enc.U_z") * x + ps.value("enc.b_z"));
    const Vector r = sigmoid(ps.value("enc.W_r") * h + ps.value("enc.U_r") * x + ps.value("enc.b_r"));
    const Vector n = (ps.value("enc.W_h") * r.cwiseProduct(h) + ps.value("enc.U_h") * x + ps.value("enc.b_h"))
                         .array().tanh().matrix();
    return (Vector::Ones(h.size()) - z).cwiseProduct(h) + z.cwiseProduct(n);
}

inline std::vector<Vector> random_sequence(std::mt19937_64& rng, int len, int dim, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<Vector> out;
    for (int i = 0; i < len; ++i) {
        Vector v(dim);
        for (int k = 0; k < dim; ++k) v(k) = n(rng);
        out.push_back(v);
    }
    return out;
}

// Greedy over every candidate span, removing the chosen one and anything overlapping by >= theta days.
inline SpanList brute_force_nms(const SpanProbabilities& p, int max_spans, int theta) {
    const int T = static_cast<int>(p.p_start.size());
    std::vector<BubbleSpan> remaining;
    for (int s = 1; s <= T; ++s)
        for (int e = s + 1; e <= T; ++e) remaining.push_back({s, e});
    SpanList accepted;
    while (static_cast<int>(accepted.size()) < max_spans && !remaining.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < remaining.size(); ++i) {
            const double a = p.p_start[remaining[i].start - 1] * p.p_end[remaining[i].end - 1];
            const double b = p.p_start[remaining[best].start - 1] * p.p_end[remaining[best].end - 1];
            if (a > b || (a == b && remaining[i] < remaining[best])) best = i;
        }
        const BubbleSpan chosen = remaining[best];
        accepted.push_back(chosen);
        std::erase_if(remaining, [&](const BubbleSpan& c) { return c == chosen || overlap_days(c, chosen) >= theta; });
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

}  // namespace oracle
