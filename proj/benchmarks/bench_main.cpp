#include "bubblecast/diffcore.hpp"
#include "bubblecast/geometry.hpp"
#include "bubblecast/labeler.hpp"
#include "bubblecast/network.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace bubblecast;

namespace {

Eigen::VectorXd random_point(std::mt19937_64& rng, int dim, double radius) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = n(rng);
    return radius * v / v.norm();
}

std::vector<Eigen::VectorXd> random_sequence(int len, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Eigen::VectorXd> seq;
    for (int i = 0; i < len; ++i) seq.push_back(random_point(rng, dim, 0.5));
    return seq;
}

}  // namespace

static void BM_MobiusAdd(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const int dim = static_cast<int>(state.range(0));
    const geometry::BallPoint x(random_point(rng, dim, 0.6));
    const geometry::BallPoint y(random_point(rng, dim, 0.7));
    for (auto _ : state) benchmark::DoNotOptimize(geometry::mobius_add(x, y));
}
BENCHMARK(BM_MobiusAdd)->Arg(8)->Arg(64);

static void BM_ExpLogRoundTrip(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const int dim = static_cast<int>(state.range(0));
    const geometry::BallPoint x(random_point(rng, dim, 0.5));
    const geometry::TangentVector v(random_point(rng, dim, 1.0));
    for (auto _ : state) benchmark::DoNotOptimize(geometry::log_map(x, geometry::exp_map(x, v)));
}
BENCHMARK(BM_ExpLogRoundTrip)->Arg(8)->Arg(64);

static void BM_ForwardInference(benchmark::State& state) {
    network::ModelConfig cfg;
    cfg.feature_dim = 8;
    cfg.hidden_dim = static_cast<int>(state.range(0));
    const auto params = network::init_params(cfg, 3);
    const auto seq = random_sequence(cfg.lookback, cfg.feature_dim, 4);
    for (auto _ : state) benchmark::DoNotOptimize(network::forward(seq, params, cfg));
}
BENCHMARK(BM_ForwardInference)->Arg(8)->Arg(32);

// One training step's worth of work for a single sample: build, backward.
static void BM_ForwardBackward(benchmark::State& state) {
    network::ModelConfig cfg;
    cfg.feature_dim = 8;
    cfg.hidden_dim = static_cast<int>(state.range(0));
    auto params = network::init_params(cfg, 3);
    const auto seq = random_sequence(cfg.lookback, cfg.feature_dim, 4);
    for (auto _ : state) {
        params.zero_grad();
        diff::Graph g(&params);
        const auto fv = network::build_forward(g, seq, cfg);
        const auto loss = diff::add(diff::sum(fv.p_start), diff::sum(fv.count_probs));
        g.backward(loss);
        benchmark::DoNotOptimize(params.grad("enc.W_z").data());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(32);

static void BM_BsadfSequence(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<double> logp(n, 0.0);
    for (std::size_t t = 1; t < n; ++t) logp[t] = logp[t - 1] + noise(rng);
    labeler::PsyConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(labeler::bsadf_sequence(logp, cfg));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BsadfSequence)->Arg(120)->Arg(500)->Complexity();

static void BM_ExtractSpans(benchmark::State& state) {
    const int horizon = static_cast<int>(state.range(0));
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    network::SpanProbabilities p{Eigen::VectorXd(horizon), Eigen::VectorXd(horizon)};
    for (int i = 0; i < horizon; ++i) {
        p.p_start(i) = u(rng);
        p.p_end(i) = u(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(network::extract_spans(p, horizon / 2, 2));
}
BENCHMARK(BM_ExtractSpans)->Arg(5)->Arg(30);

BENCHMARK_MAIN();
