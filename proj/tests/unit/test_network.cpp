#include "bubblecast/errors.hpp"
#include "bubblecast/geometry.hpp"
#include "bubblecast/network.hpp"

#include "network_oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace bubblecast;
using namespace bubblecast::network;
namespace geo = bubblecast::geometry;
using diff::ParamStore;
using Matrix = Eigen::MatrixXd;

namespace {

using oracle::brute_force_nms;
using oracle::random_sequence;
using oracle::sigmoid;
using oracle::textbook_gru;

ModelConfig small_config(GeometryMode mode, int feature = 2, int hidden = 3, int tau = 3, int T = 5) {
    ModelConfig c;
    c.feature_dim = feature;
    c.hidden_dim = hidden;
    c.lookback = tau;
    c.lookahead = T;
    c.geometry_mode = mode;
    return c;
}

const Matrix& P(const ParamStore& ps, const char* name) { return ps.value(name); }

// The four gate equations, written with the value-level ball operations.
Vector oracle_hyperbolic_cell(const Vector& h, const Vector& x, const ParamStore& ps) {
    using geo::BallPoint;
    const BallPoint H(h), X(x);
    auto gate = [&](const char* w, const char* u, const char* b) {
        const BallPoint s = geo::mobius_add(geo::mobius_add(geo::mobius_matmul(P(ps, w), H),
                                                            geo::mobius_matmul(P(ps, u), X)),
                                            geo::exp0(geo::TangentVector(P(ps, b))));
        return sigmoid(geo::log0(s).coords());
    };
    const Vector z = gate("enc.W_z", "enc.U_z", "enc.b_z");
    const Vector r = gate("enc.W_r", "enc.U_r", "enc.b_r");
    const Matrix wr = P(ps, "enc.W_h") * r.asDiagonal();
    const BallPoint pre = geo::mobius_add(
        geo::mobius_add(geo::mobius_matmul(wr, H), geo::mobius_matmul(P(ps, "enc.U_h"), X)),
        geo::exp0(geo::TangentVector(P(ps, "enc.b_h"))));
    const BallPoint cand = geo::hyperbolic_tanh(pre);
    const BallPoint diff = geo::mobius_add(-H, cand);
    const BallPoint step = geo::mobius_matmul(Matrix(z.asDiagonal()), diff);
    return geo::mobius_add(H, step).coords();
}

}  // namespace

TEST(ModelConfig, Invariants) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.max_bubble_count(), 2);
    EXPECT_EQ(c.count_classes(), 3);
    c.lookahead = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ModelConfig{};
    c.max_bubbles = 3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ModelConfig{};
    c.nms_threshold = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ModelConfig{};
    c.lookback = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Params, InitIsSeededAndValidated) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    const ParamStore a = init_params(c, 3), b = init_params(c, 3), other = init_params(c, 4);
    EXPECT_EQ(a.value("enc.W_z"), b.value("enc.W_z"));
    EXPECT_NE(a.value("enc.W_z"), other.value("enc.W_z"));
    // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    EXPECT_LE(a.value("enc.U_z").cwiseAbs().maxCoeff(), 1.0 / std::sqrt(2.0));
    EXPECT_NO_THROW(validate_params(a, c));
    ModelConfig bigger = c;
    bigger.hidden_dim = 4;
    EXPECT_THROW(validate_params(a, bigger), DataError);
}

TEST(HgruCell, ZeroParamsAtOriginStayAtOrigin) {
    for (GeometryMode mode : {GeometryMode::hyperbolic, GeometryMode::euclidean}) {
        const ModelConfig c = small_config(mode);
        const Vector h = hgru_cell(Vector::Zero(3), Vector::Zero(2), zero_params(c), mode);
        EXPECT_EQ(h, Vector::Zero(3));
    }
}

TEST(HgruCell, MatchesStraightLineTranscription) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const ParamStore ps = init_params(c, 100 + trial);
        const Vector h = geo::exp0(geo::TangentVector(random_sequence(rng, 1, 3, 0.5)[0])).coords();
        const Vector x = geo::exp0(geo::TangentVector(random_sequence(rng, 1, 2)[0])).coords();
        const Vector got = hgru_cell(h, x, ps, GeometryMode::hyperbolic);
        EXPECT_LE((got - oracle_hyperbolic_cell(h, x, ps)).norm(), 1e-12);
        EXPECT_LT(got.norm(), 1.0);
    }
}

TEST(HgruCell, ShapeMismatch) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    EXPECT_THROW((void)hgru_cell(Vector::Zero(3), Vector::Zero(4), init_params(c, 1), GeometryMode::hyperbolic),
                 ShapeError);
}

TEST(Encode, SingletonSequence) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    const ParamStore ps = init_params(c, 5);
    const std::vector<Vector> seq{Vector::Constant(2, 0.4)};
    const EncoderOutput out = encode(seq, ps, c);
    ASSERT_EQ(out.attention.size(), 1);
    EXPECT_EQ(out.attention(0), 1.0);
    EXPECT_LE((out.info - geo::log0(geo::BallPoint(out.hidden_states[0])).coords()).norm(), 1e-15);
}

TEST(Encode, IdenticalStatesGiveUniformAttention) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    ParamStore ps = zero_params(c);
    ps.value("attn.W") = Matrix::Identity(3, 3);
    std::mt19937_64 rng(2);
    const EncoderOutput out = encode(random_sequence(rng, 4, 2), ps, c);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(out.attention(j), 0.25, 1e-15);
}

TEST(Encode, MatchesHandUnrolledAttention) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic, 2, 2, 3, 5);
    const ParamStore ps = init_params(c, 77);
    std::mt19937_64 rng(3);
    const auto seq = random_sequence(rng, 3, 2);
    Vector h = Vector::Zero(2);
    std::vector<Vector> logs;
    for (const Vector& q : seq) {
        h = oracle_hyperbolic_cell(h, geo::exp0(geo::TangentVector(q)).coords(), ps);
        logs.push_back(geo::log0(geo::BallPoint(h)).coords());
    }
    Vector scores(3);
    for (int j = 0; j < 3; ++j) scores(j) = logs[j].dot(P(ps, "attn.W") * logs.back());
    const Vector gamma = (scores.array() - scores.maxCoeff()).exp().matrix() /
                         (scores.array() - scores.maxCoeff()).exp().sum();
    const Vector u = gamma(0) * logs[0] + gamma(1) * logs[1] + gamma(2) * logs[2];

    const EncoderOutput out = encode(seq, ps, c);
    EXPECT_LE((out.attention - gamma).norm(), 1e-12);
    EXPECT_LE((out.info - u).norm(), 1e-12);
    EXPECT_NEAR(out.attention.sum(), 1.0, 1e-9);
    EXPECT_GE(out.attention.minCoeff(), 0.0);
}

TEST(Encode, AttentionDisabledUsesLastState) {
    ModelConfig c = small_config(GeometryMode::hyperbolic);
    c.attention_enabled = false;
    std::mt19937_64 rng(4);
    const EncoderOutput out = encode(random_sequence(rng, 3, 2), init_params(c, 8), c);
    EXPECT_EQ(out.info, geo::log0(geo::BallPoint(out.hidden_states.back())).coords());
}

TEST(Encode, EuclideanWithoutAttentionIsATextbookGru) {
    ModelConfig c = small_config(GeometryMode::euclidean, 3, 4, 5, 5);
    c.attention_enabled = false;
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const ParamStore ps = init_params(c, 1000 + trial);
        const auto seq = random_sequence(rng, 1 + trial % 7, 3);
        Vector h = Vector::Zero(4);
        std::vector<Vector> states;
        for (const Vector& x : seq) states.push_back(h = textbook_gru(h, x, ps));
        const EncoderOutput out = encode(seq, ps, c);
        ASSERT_EQ(out.hidden_states.size(), states.size());
        for (std::size_t t = 0; t < states.size(); ++t) EXPECT_LE((out.hidden_states[t] - states[t]).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((out.info - states.back()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Encode, Errors) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    const ParamStore ps = init_params(c, 1);
    EXPECT_THROW((void)encode(std::vector<Vector>{}, ps, c), std::invalid_argument);
    EXPECT_THROW((void)encode(std::vector<Vector>{Vector::Zero(5)}, ps, c), ShapeError);
    EXPECT_THROW((void)encode(std::vector<Vector>{Vector::Constant(2, std::nan(""))}, ps, c), std::invalid_argument);
}

TEST(Encode, HiddenStatesStayInsideTheBall) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic, 3, 4, 5, 5);
    std::mt19937_64 rng(9);
    int steps = 0;
    for (int trial = 0; steps < 10000; ++trial) {
        ParamStore ps = init_params(c, trial);
        for (auto& e : ps.entries()) e.value *= 6.0;  // push towards the boundary
        const auto seq = random_sequence(rng, 50, 3, 5.0);
        for (const Vector& h : encode(seq, ps, c).hidden_states) {
            EXPECT_LT(h.norm(), 1.0);
            ++steps;
        }
    }
}

TEST(SpanProbs, ZeroHeadsGiveOneHalf) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    ParamStore ps = init_params(c, 2);
    ps.value("span.W_start").setZero();
    ps.value("span.W_end").setZero();
    const SpanProbabilities p = span_probs(Vector::Constant(3, 0.3), ps, c);
    EXPECT_EQ(p.p_start, Vector::Constant(5, 0.5));
    EXPECT_EQ(p.p_end, Vector::Constant(5, 0.5));
}

TEST(SpanProbs, MatchesHandUnrolledDecoder) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic, 2, 3, 3, 2);
    const ParamStore ps = init_params(c, 31);
    const Vector u = (Vector(3) << 0.4, -1.1, 0.7).finished();
    Vector s = u;
    Vector start(2), end(2);
    for (int t = 0; t < 2; ++t) {
        const Vector z = sigmoid(P(ps, "dec.W_z") * s + P(ps, "dec.b_z"));
        const Vector r = sigmoid(P(ps, "dec.W_r") * s + P(ps, "dec.b_r"));
        const Vector n = (P(ps, "dec.W_h") * r.cwiseProduct(s) + P(ps, "dec.b_h")).array().tanh().matrix();
        s = (Vector::Ones(3) - z).cwiseProduct(s) + z.cwiseProduct(n);
        start(t) = sigmoid(P(ps, "span.W_start") * s)(0);
        end(t) = sigmoid(P(ps, "span.W_end") * s)(0);
    }
    const SpanProbabilities p = span_probs(u, ps, c);
    EXPECT_LE((p.p_start - start).norm(), 1e-14);
    EXPECT_LE((p.p_end - end).norm(), 1e-14);
    EXPECT_THROW((void)span_probs(Vector::Zero(4), ps, c), ShapeError);
}

TEST(SpanProbs, StrictlyInsideUnitInterval) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic, 2, 3, 3, 8);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        const SpanProbabilities p = span_probs(random_sequence(rng, 1, 3, 3.0)[0], init_params(c, i), c);
        EXPECT_GT(p.p_start.minCoeff(), 0.0);
        EXPECT_LT(p.p_start.maxCoeff(), 1.0);
        EXPECT_GT(p.p_end.minCoeff(), 0.0);
        EXPECT_LT(p.p_end.maxCoeff(), 1.0);
    }
}

TEST(CountBubbles, Examples) {
    ModelConfig c = small_config(GeometryMode::hyperbolic, 2, 3, 3, 6);
    ParamStore ps = zero_params(c);
    CountPrediction z = count_bubbles(Vector::Constant(3, 0.2), ps, c);
    EXPECT_EQ(z.count, 0);
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(z.probs(k), 0.25);

    c.max_bubbles = 2;
    ParamStore three = zero_params(c);
    three.value("count.b2") = (Matrix(3, 1) << 0.1, 2.0, -1.0).finished();
    const CountPrediction p = count_bubbles(Vector::Zero(3), three, c);
    EXPECT_EQ(p.count, 1);
    EXPECT_NEAR(p.probs.sum(), 1.0, 1e-9);

    EXPECT_EQ(argmax_first((Vector(3) << 1.0, 3.0, 3.0).finished()), 1);
}

TEST(ExtractSpans, Examples) {
    SpanProbabilities p;
    p.p_start = (Vector(5) << 0.9, 0.1, 0.8, 0.1, 0.1).finished();
    p.p_end = (Vector(5) << 0.1, 0.9, 0.1, 0.1, 0.9).finished();
    EXPECT_TRUE(extract_spans(p, 0, 1).empty());
    const SpanList got = extract_spans(p, 2, 1);
    EXPECT_EQ(got, (SpanList{{1, 2}, {3, 5}}));
}

TEST(ExtractSpans, ThresholdTwoAllowsOneSharedDay) {
    SpanProbabilities p;
    p.p_start = (Vector(5) << 0.9, 0.1, 0.8, 0.1, 0.1).finished();
    p.p_end = (Vector(5) << 0.1, 0.1, 0.9, 0.1, 0.8).finished();
    // (1,3) first; (3,5) shares day 3 only.
    EXPECT_EQ(extract_spans(p, 2, 2), (SpanList{{1, 3}, {3, 5}}));
    EXPECT_EQ(extract_spans(p, 2, 1), (SpanList{{1, 3}, {4, 5}}));
}

TEST(ExtractSpans, TiesPreferSmallerStartThenEnd) {
    SpanProbabilities p;
    p.p_start = Vector::Constant(4, 0.5);
    p.p_end = Vector::Constant(4, 0.5);
    EXPECT_EQ(extract_spans(p, 1, 2), (SpanList{{1, 2}}));
    EXPECT_EQ(extract_spans(p, 2, 1), (SpanList{{1, 2}, {3, 4}}));
}

TEST(ExtractSpans, AgreesWithBruteForceGreedy) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(1, 4);
    for (int draw = 0; draw < 300; ++draw) {
        const int T = 2 + draw % 7;
        SpanProbabilities p{Vector(T), Vector(T)};
        const bool ties = draw % 3 == 0;
        for (int t = 0; t < T; ++t) {
            p.p_start(t) = ties ? coarse(rng) / 5.0 : u(rng);
            p.p_end(t) = ties ? coarse(rng) / 5.0 : u(rng);
        }
        for (int theta = 1; theta <= 3; ++theta) {
            for (int b = 0; b <= T / 2; ++b) {
                const SpanList got = extract_spans(p, b, theta);
                EXPECT_EQ(got, brute_force_nms(p, b, theta));
                for (std::size_t i = 0; i < got.size(); ++i)
                    for (std::size_t j = i + 1; j < got.size(); ++j) EXPECT_LT(overlap_days(got[i], got[j]), theta);
            }
        }
    }
}

TEST(Forward, ZeroModel) {
    const ModelConfig c = small_config(GeometryMode::hyperbolic);
    std::mt19937_64 rng(1);
    const ForwardResult r = forward(random_sequence(rng, 3, 2), zero_params(c), c);
    EXPECT_EQ(r.spans.p_start, Vector::Constant(5, 0.5));
    EXPECT_EQ(r.count.count, 0);
    EXPECT_TRUE(r.extracted.empty());
}

TEST(Forward, ModesDifferAndCallsAreDeterministic) {
    ModelConfig h = small_config(GeometryMode::hyperbolic);
    ModelConfig e = small_config(GeometryMode::euclidean);
    const ParamStore ps = init_params(h, 12);
    std::mt19937_64 rng(7);
    const auto seq = random_sequence(rng, 3, 2);
    const ForwardResult a = forward(seq, ps, h), b = forward(seq, ps, h), c = forward(seq, ps, e);
    EXPECT_EQ(a.spans.p_start, b.spans.p_start);
    EXPECT_EQ(a.count.probs, b.count.probs);
    EXPECT_EQ(a.extracted, b.extracted);
    EXPECT_GT((a.spans.p_start - c.spans.p_start).norm(), 1e-6);
    EXPECT_LE(static_cast<int>(a.extracted.size()), a.count.count);
}
