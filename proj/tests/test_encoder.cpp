#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "topicdpr/autodiff.hpp"
#include "topicdpr/common.hpp"
#include "topicdpr/encoder.hpp"

using namespace topicdpr;
using Matrix = Eigen::MatrixXd;

namespace {

Matrix filled(long rows, long cols, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

EncoderConfig small_config() {
    EncoderConfig c;
    c.dim = 4;
    c.num_layers = 2;
    c.heads = 2;
    c.ff_dim = 8;
    c.max_len = 6;
    c.vocab_size = 9;
    return c;
}

std::vector<std::pair<Matrix, Matrix>> small_prefix(const EncoderConfig& c, uint64_t seed) {
    std::vector<std::pair<Matrix, Matrix>> out;
    for (int i = 0; i < c.num_layers; ++i) {
        out.emplace_back(filled(2, c.dim, seed + 2 * i), filled(2, c.dim, seed + 2 * i + 1));
    }
    return out;
}

double encoder_scalar(const EncoderParams& params, const EncoderConfig& config,
                      const std::vector<int>& tokens,
                      const std::vector<std::pair<Matrix, Matrix>>& prefix, const Matrix& w) {
    ad::Tape tape;
    EncoderVars vars = encoder_leafs(tape, params);
    LayerPrefixVars pv;
    if (!prefix.empty()) {
        pv.prompt_len = static_cast<int>(prefix[0].first.rows());
        for (const auto& [k, v] : prefix) {
            pv.layers.emplace_back(tape.leaf(k, "kp"), tape.leaf(v, "vp"));
        }
    }
    ad::Var out =
        encode_tokens(tape, vars, config, tokens, prefix.empty() ? nullptr : &pv, nullptr);
    return (tape.value(out).array() * w.array()).sum();
}

}  // namespace

TEST_CASE("single-token prefix attention matches the hand computation") {
    EncoderConfig config;
    config.dim = 2;
    config.num_layers = 1;
    config.heads = 1;
    config.ff_dim = 4;
    config.max_len = 4;
    config.vocab_size = 3;

    EncoderParams p;
    p.token_embeddings = Matrix::Zero(3, 2);
    p.position_embeddings = Matrix::Zero(4, 2);
    p.layers.resize(1);
    auto& l = p.layers[0];
    l.wq = Matrix::Identity(2, 2);
    l.bq = (Matrix(1, 2) << 0.1, 0.0).finished();
    l.wk = (Matrix(2, 2) << 0.0, 1.0, 1.0, 0.0).finished();
    l.bk = Matrix::Zero(1, 2);
    l.wv = (Matrix(2, 2) << 1.0, 1.0, 0.0, 1.0).finished();
    l.bv = (Matrix(1, 2) << 0.2, -0.1).finished();
    l.wo = (Matrix(2, 2) << 2.0, 0.0, 0.0, 1.0).finished();
    l.bo = (Matrix(1, 2) << 0.0, 0.3).finished();
    l.w1 = Matrix::Zero(2, 4);
    l.b1 = Matrix::Zero(1, 4);
    l.w2 = Matrix::Zero(4, 2);
    l.b2 = Matrix::Zero(1, 2);
    l.ln1_gain = Matrix::Ones(1, 2);
    l.ln1_offset = Matrix::Zero(1, 2);
    l.ln2_gain = Matrix::Ones(1, 2);
    l.ln2_offset = Matrix::Zero(1, 2);

    Matrix hidden = (Matrix(1, 2) << 0.5, -1.0).finished();
    Matrix kp = (Matrix(1, 2) << 0.3, 0.7).finished();
    Matrix vp = (Matrix(1, 2) << -0.5, 0.4).finished();

    Matrix with = attend_with_prefix(p, 0, hidden, kp, vp, config);
    REQUIRE(with.rows() == 1);
    CHECK(with(0, 0) == doctest::Approx(-0.042681077812329216).epsilon(1e-12));
    CHECK(with(0, 1) == doctest::Approx(0.30111711575513717).epsilon(1e-12));

    // no prefix rows: a single token attends only to itself
    Matrix without = attend_with_prefix(p, 0, hidden, Matrix(0, 2), Matrix(0, 2), config);
    CHECK(without(0, 0) == doctest::Approx(1.4).epsilon(1e-14));
    CHECK(without(0, 1) == doctest::Approx(-0.3).epsilon(1e-14));

    CHECK_THROWS_AS(attend_with_prefix(p, 1, hidden, kp, vp, config), DataError);
}

TEST_CASE("an empty prefix reproduces standard attention bit for bit") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 21);
    std::vector<int> tokens = {1, 4, 7, 2};

    Representation plain = encode(params, config, tokens, nullptr, Role::kQuery, "q", -1);
    LayerPrefixes empty;
    Representation with_empty = encode(params, config, tokens, &empty, Role::kQuery, "q", -1);
    REQUIRE(plain.values.size() == with_empty.values.size());
    for (long i = 0; i < plain.values.size(); ++i) {
        CHECK(plain.values(i) == with_empty.values(i));
    }
}

TEST_CASE("representation reacts to prefixes, token order, and prompt identity") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 22);
    std::vector<int> tokens = {1, 4, 7, 2};

    LayerPrefixes a, b;
    for (int i = 0; i < config.num_layers; ++i) {
        a.layers.emplace_back(filled(2, 4, 100 + i), filled(2, 4, 200 + i));
        b.layers.emplace_back(filled(2, 4, 300 + i), filled(2, 4, 400 + i));
    }

    Representation ra = encode(params, config, tokens, &a, Role::kPassage, "d", 0);
    Representation rb = encode(params, config, tokens, &b, Role::kPassage, "d", 1);
    Representation plain = encode(params, config, tokens, nullptr, Role::kPassage, "d", -1);
    CHECK((ra.values - rb.values).norm() > 1e-8);
    CHECK((ra.values - plain.values).norm() > 1e-8);

    std::vector<int> reversed = {2, 7, 4, 1};
    Representation rr = encode(params, config, reversed, nullptr, Role::kPassage, "d", -1);
    CHECK((rr.values - plain.values).norm() > 1e-8);

    CHECK(ra.prompt_index == 0);
    CHECK(rb.prompt_index == 1);
    CHECK(ra.role == Role::kPassage);
    CHECK(ra.source_id == "d");
}

TEST_CASE("sequences beyond max_len are cut and flagged") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 23);

    std::vector<int> longer = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> head(longer.begin(), longer.begin() + config.max_len);

    Representation cut = encode(params, config, longer, nullptr, Role::kQuery, "q", -1);
    Representation fit = encode(params, config, head, nullptr, Role::kQuery, "q", -1);
    CHECK(cut.truncated);
    CHECK_FALSE(fit.truncated);
    for (long i = 0; i < cut.values.size(); ++i) CHECK(cut.values(i) == fit.values(i));
}

TEST_CASE("encode wrapper reproduces a manually assembled tape") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 24);
    std::vector<int> tokens = {3, 0, 8};
    auto prefix = small_prefix(config, 500);

    ad::Tape tape;
    EncoderVars vars = encoder_leafs(tape, params);
    LayerPrefixVars pv;
    pv.prompt_len = 2;
    for (const auto& [k, v] : prefix) {
        pv.layers.emplace_back(tape.leaf(k, "kp"), tape.leaf(v, "vp"));
    }
    ad::Var out = encode_tokens(tape, vars, config, tokens, &pv, nullptr);

    LayerPrefixes lp;
    lp.layers = prefix;
    Representation rep = encode(params, config, tokens, &lp, Role::kQuery, "q", 0);
    for (long i = 0; i < rep.values.size(); ++i) {
        CHECK(rep.values(i) == tape.value(out)(0, i));
    }
}

TEST_CASE("encoder gradients flow through tokens, weights, and prefixes") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 25);
    std::vector<int> tokens = {1, 3, 5, 2};
    auto prefix = small_prefix(config, 600);
    const Matrix w = filled(1, config.dim, 991, 0.25, 1.75);

    ad::Tape tape;
    EncoderVars vars = encoder_leafs(tape, params);
    LayerPrefixVars pv;
    pv.prompt_len = 2;
    for (const auto& [k, v] : prefix) {
        pv.layers.emplace_back(tape.leaf(k, "kp"), tape.leaf(v, "vp"));
    }
    ad::Var out = encode_tokens(tape, vars, config, tokens, &pv, nullptr);
    tape.backward(tape.dot(out, tape.leaf(w, "reduction")));

    const double step = 1e-6;
    auto fd_check = [&](Matrix& target, const Matrix& analytic) {
        for (long r = 0; r < target.rows(); ++r) {
            for (long c = 0; c < target.cols(); ++c) {
                const double orig = target(r, c);
                target(r, c) = orig + step;
                const double up = encoder_scalar(params, config, tokens, prefix, w);
                target(r, c) = orig - step;
                const double down = encoder_scalar(params, config, tokens, prefix, w);
                target(r, c) = orig;
                const double fd = (up - down) / (2.0 * step);
                CHECK(std::abs(fd - analytic(r, c)) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    };

    fd_check(params.token_embeddings, tape.grad(vars.token_embeddings));
    fd_check(params.layers[0].wq, tape.grad(vars.layers[0].wq));
    fd_check(params.layers[1].w2, tape.grad(vars.layers[1].w2));
    fd_check(params.layers[0].ln1_gain, tape.grad(vars.layers[0].ln1_gain));
    fd_check(prefix[1].first, tape.grad(pv.layers[1].first));
    fd_check(prefix[0].second, tape.grad(pv.layers[0].second));

    // unused vocabulary rows receive no gradient
    Matrix emb_grad = tape.grad(vars.token_embeddings);
    CHECK(emb_grad.row(7).isZero(0.0));
}

TEST_CASE("encoder configuration and inputs are validated") {
    EncoderConfig config = small_config();
    EncoderParams params = init_encoder(config, 26);

    EncoderConfig odd = config;
    odd.heads = 3;
    CHECK_THROWS_AS(odd.validate(), DataError);
    EncoderConfig unset = config;
    unset.vocab_size = 0;
    CHECK_THROWS_AS(unset.validate(), DataError);

    CHECK_THROWS_AS(encode(params, config, {}, nullptr, Role::kQuery, "q", -1), DataError);

    LayerPrefixes short_prefix;
    short_prefix.layers.emplace_back(filled(2, 4, 1), filled(2, 4, 2));
    CHECK_THROWS_AS(encode(params, config, {1, 2}, &short_prefix, Role::kQuery, "q", -1), DataError);
}

TEST_CASE("encoder initialization is seed-deterministic") {
    EncoderConfig config = small_config();
    EncoderParams a = init_encoder(config, 7);
    EncoderParams b = init_encoder(config, 7);
    EncoderParams c = init_encoder(config, 8);
    CHECK((a.token_embeddings - b.token_embeddings).isZero(0.0));
    CHECK((a.layers[1].wv - b.layers[1].wv).isZero(0.0));
    CHECK_FALSE((a.token_embeddings - c.token_embeddings).isZero(0.0));
    CHECK(a.layers[0].bq.isZero(0.0));
    CHECK((a.layers[0].ln1_gain - Matrix::Ones(1, 4)).isZero(0.0));
}
