// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "lsplit/error.hpp"
#include "lsplit/llm.hpp"

using namespace lsplit;
using namespace lsplit::llm;

namespace {

LlmConfig small_config() {
    LlmConfig c;
    c.n_blocks = 8;
    c.d_model = 64;
    c.heads = 4;
    c.vocab = 256;
    c.max_len = 64;
    c.seed = PrngSeed{42};
    return c;
}

const Model& small_model() {
    static const Model m = build_toy_llm(small_config());
    return m;
}

std::vector<TokenId> random_prompt(Prng& rng, std::size_t len, std::size_t vocab) {
    std::vector<TokenId> p(len);
    for (auto& t : p) t = static_cast<TokenId>(rng.uniform01() * (vocab - 1));
    return p;
}

using Mat = std::vector<std::vector<double>>;

Mat mul(const Mat& a, const Tensor& b) {
    Mat c(a.size(), std::vector<double>(b.cols(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t t = 0; t < b.rows(); ++t)
            for (std::size_t j = 0; j < b.cols(); ++j) c[i][j] += a[i][t] * b(t, j);
    return c;
}

Mat norm(const Mat& x, const Tensor& g, const Tensor& b) {
    Mat y = x;
    for (auto& row : y) {
        double mean = 0.0, var = 0.0;
        for (double v : row) mean += v;
        mean /= row.size();
        for (double v : row) var += (v - mean) * (v - mean);
        var /= row.size();
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = (row[j] - mean) / std::sqrt(var + 1e-5) * g.values()[j] + b.values()[j];
    }
    return y;
}

// Whole-sequence forward with no caches, in double precision.
std::vector<double> oracle_logits(const Model& m, const std::vector<TokenId>& seq) {
    const auto n = seq.size(), d = m.config.d_model;
    Mat x(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i][j] = double(m.token_embedding(seq[i], j)) + m.position_embedding(i, j);
    for (const auto& blk : m.blocks) {
        const Mat a = norm(x, blk.ln1_gamma, blk.ln1_beta);
        const Mat q = mul(a, blk.attn.wq), k = mul(a, blk.attn.wk), v = mul(a, blk.attn.wv);
        const auto heads = blk.attn.heads, dh = d / heads;
        Mat mixed(n, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t h = 0; h < heads; ++h) {
                std::vector<double> s(i + 1);
                double mx = -1e300, z = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) dot += q[i][h * dh + c] * k[j][h * dh + c];
                    s[j] = dot / std::sqrt(double(dh));
                    mx = std::max(mx, s[j]);
                }
                for (auto& e : s) z += (e = std::exp(e - mx));
                for (std::size_t j = 0; j <= i; ++j)
                    for (std::size_t c = 0; c < dh; ++c) mixed[i][h * dh + c] += s[j] / z * v[j][h * dh + c];
            }
        }
        const Mat att = mul(mixed, blk.attn.wo);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x[i][j] += att[i][j];
        Mat hdn = mul(norm(x, blk.ln2_gamma, blk.ln2_beta), blk.w1);
        for (auto& row : hdn) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                const double u = row[j] + blk.b1.values()[j];
                row[j] = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
            }
        }
        const Mat out = mul(hdn, blk.w2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x[i][j] += out[i][j] + blk.b2.values()[j];
    }
    const Mat last = norm(Mat{x.back()}, m.final_gamma, m.final_beta);
    return mul(last, m.lm_head)[0];
}

}  // namespace

TEST_CASE("parameter count follows the closed form") {
    for (std::size_t n : {2, 4, 8}) {
        LlmConfig c = small_config();
        c.n_blocks = n;
        c.d_model = 32;
        const auto d = c.d_model;
        const std::size_t want = 2 * c.vocab * d + c.max_len * d + n * (12 * d * d + 9 * d) + 2 * d;
        CHECK(build_toy_llm(c).parameter_count() == want);
    }
}

TEST_CASE("plan_partition splits the local budget front-heavy") {
    CHECK(plan_partition(32, 2) == PartitionPlan{32, 1, 31});
    CHECK(plan_partition(32, 16) == PartitionPlan{32, 8, 24});
    CHECK(plan_partition(8, 0) == PartitionPlan{8, 0, 8});
    CHECK(plan_partition(8, 3) == PartitionPlan{8, 2, 7});
    CHECK(plan_partition(8, 8) == PartitionPlan{8, 4, 4});
    CHECK(plan_partition(32, 2).ratio() == "2:30");
    CHECK_THROWS_AS(plan_partition(8, 9), Error);
}

TEST_CASE("invalid plans are plan errors") {
    for (auto plan : {PartitionPlan{8, 5, 4}, PartitionPlan{8, 0, 9}}) {
        try {
            partition(small_model(), plan);
            FAIL("expected a plan error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::plan);
        }
    }
    CHECK_THROWS_AS(partition(small_model(), PartitionPlan{7, 1, 6}), Error);
}

TEST_CASE("partition sizes add up") {
    for (std::size_t x = 0; x <= 8; ++x) {
        for (std::size_t y = x; y <= 8; ++y) {
            const auto p = partition(small_model(), {8, x, y});
            CHECK(p.head.layers() == x);
            CHECK(p.body.layers() == y - x);
            CHECK(p.tail.layers() == 8 - y);
        }
    }
}

TEST_CASE("argmax ties go to the lower id") {
    const std::vector<float> v{1.0f, 3.0f, 3.0f, 2.0f};
    CHECK(argmax_token(v) == 1);
    const std::vector<float> flat(10, 0.0f);
    CHECK(argmax_token(flat) == 0);
}

TEST_CASE("tokenizer is byte level and avoids EOS") {
    const auto t = tokenize("AB\xff", 256);
    CHECK(t == std::vector<TokenId>{65, 66, 0});
    CHECK(detokenize(tokenize("hello", 256), 256) == "hello");
}

TEST_CASE("logits agree with a cache-free double-precision forward") {
    const auto& m = small_model();
    Prng rng(PrngSeed{3});
    const auto prompt = random_prompt(rng, 9, 256);
    const auto p = partition(m, {8, 8, 8});
    auto hc = p.head.make_cache();
    auto tc = p.tail.make_cache();
    const Tensor logits = p.tail.logits(p.head.forward(prompt, hc), tc);
    const auto want = oracle_logits(m, prompt);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::fabs(logits.values()[i] - want[i]) < 1e-4);
}

TEST_CASE("greedy decoding matches the oracle where the margin is clear") {
    const auto& m = small_model();
    Prng rng(PrngSeed{4});
    std::vector<TokenId> seq = random_prompt(rng, 5, 256);
    const auto tokens = generate_monolithic(m, seq, 8, false);
    for (auto t : tokens) {
        const auto logits = oracle_logits(m, seq);
        std::vector<double> sorted = logits;
        std::sort(sorted.rbegin(), sorted.rend());
        if (sorted[0] - sorted[1] > 1e-3) {
            const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
            CHECK(t == static_cast<TokenId>(best));
        }
        seq.push_back(t);
    }
}

TEST_CASE("head over a batch equals head stepped one token at a time") {
    const auto p = partition(small_model(), {8, 3, 8});
    Prng rng(PrngSeed{5});
    const auto prompt = random_prompt(rng, 7, 256);
    auto batch_cache = p.head.make_cache();
    const Tensor batch = p.head.forward(prompt, batch_cache);
    auto step_cache = p.head.make_cache();
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        const Tensor row = p.head.forward(std::span(prompt).subspan(i, 1), step_cache);
        CHECK(row.bit_equal(batch.slice_rows(i, i + 1)));
    }
}

TEST_CASE("split generation equals monolithic for every plan") {
    const auto& m = small_model();
    Prng rng(PrngSeed{2024});
    const std::vector<PartitionPlan> plans{{8, 0, 8}, {8, 1, 7}, {8, 2, 6}, {8, 4, 4}, {8, 8, 8}, {8, 3, 5}, {8, 0, 0}};
    for (int trial = 0; trial < 6; ++trial) {
        const auto prompt = random_prompt(rng, 1 + static_cast<std::size_t>(rng.uniform01() * 16), 256);
        const auto want = generate_monolithic(m, prompt, 24, false);
        for (const auto& plan : plans) {
            const auto p = partition(m, plan);
            for (bool caching : {true, false}) {
                SplitOptions opts;
                opts.caching = caching;
                opts.stop_at_eos = false;
                const auto run = generate_split(p.head, p.body, p.tail, prompt, 24, opts);
                CAPTURE(plan.x);
                CAPTURE(plan.y);
                CAPTURE(caching);
                CHECK(run.error.empty());
                CHECK(run.tokens == want);
            }
        }
    }
}

TEST_CASE("uplink payload follows the traffic formula") {
    const auto& m = small_model();
    const auto p = partition(m, {8, 2, 6});
    const std::vector<TokenId> prompt = tokenize("hello there", 256);
    const std::size_t l_out = 10, l_in = prompt.size(), d = 64;
    for (bool caching : {true, false}) {
        SplitOptions opts;
        opts.caching = caching;
        opts.stop_at_eos = false;
        const auto run = generate_split(p.head, p.body, p.tail, prompt, l_out, opts);
        CHECK(run.report.uplink.payload_bytes == analytic_llm_traffic(l_in, l_out, d, 4, caching));
        CHECK(run.report.downlink.payload_bytes == analytic_llm_traffic(l_in, l_out, d, 4, caching));
        CHECK(run.report.uplink.count(wire::MsgType::head_out) == l_out);
        CHECK(run.report.uplink.count(wire::MsgType::text) == 0);
        for (const auto& rec : run.capture.records()) {
            const auto f = wire::decode_frame(rec.bytes);
            REQUIRE(f.ok());
            CHECK(f.frame().type != wire::MsgType::text);
        }
    }
}

TEST_CASE("FP16 wire halves the payload") {
    const auto p = partition(small_model(), {8, 1, 7});
    const auto prompt = tokenize("abc", 256);
    SplitOptions opts;
    opts.wire = wire::WireFormat::fp16;
    opts.stop_at_eos = false;
    const auto run = generate_split(p.head, p.body, p.tail, prompt, 5, opts);
    CHECK(run.error.empty());
    CHECK(run.tokens.size() == 5);
    CHECK(run.report.uplink.payload_bytes == analytic_llm_traffic(3, 5, 64, 2, true));
}

TEST_CASE("sequence overflow is reported before any traffic") {
    const auto& m = small_model();
    const std::vector<TokenId> prompt(60, 1);
    try {
        generate_monolithic(m, prompt, 5);
        FAIL("expected an overflow error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::overflow);
    }
    const auto p = partition(m, {8, 1, 7});
    CHECK_THROWS_AS(generate_split(p.head, p.body, p.tail, prompt, 5), Error);
    CHECK_THROWS_AS(generate_monolithic(m, std::vector<TokenId>{}, 5), Error);
}

TEST_CASE("generation stops at EOS when asked") {
    const auto& m = small_model();
    Prng rng(PrngSeed{6});
    for (int trial = 0; trial < 10; ++trial) {
        const auto prompt = random_prompt(rng, 4, 256);
        const auto tokens = generate_monolithic(m, prompt, 30, true);
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) CHECK(tokens[i] != m.config.eos());
    }
}

TEST_CASE("the same seed builds the same model") {
    const auto a = build_toy_llm(small_config());
    CHECK(a.lm_head.bit_equal(small_model().lm_head));
    CHECK(a.blocks[3].attn.wq.bit_equal(small_model().blocks[3].attn.wq));
    LlmConfig other = small_config();
    other.seed = PrngSeed{43};
    CHECK_FALSE(build_toy_llm(other).lm_head.bit_equal(a.lm_head));
}
