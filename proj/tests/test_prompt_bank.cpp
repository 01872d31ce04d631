#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "topicdpr/autodiff.hpp"
#include "topicdpr/common.hpp"
#include "topicdpr/encoder.hpp"
#include "topicdpr/prompt_bank.hpp"

using namespace topicdpr;
using Matrix = Eigen::MatrixXd;

namespace {

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

Matrix filled(long rows, long cols, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

TEST_CASE("a fresh bank reproduces embedding rows, cycling past the word list") {
    EncoderConfig config = small_config();
    EncoderParams encoder = init_encoder(config, 31);
    PromptBankParams bank = init_prompt_bank(encoder, config, 31);

    CHECK((bank.embeddings - encoder.token_embeddings).isZero(0.0));
    CHECK(bank.residual_w.isZero(0.0));
    CHECK(bank.residual_b.isZero(0.0));
    CHECK(bank.prefix_m.rows() == 4);
    CHECK(bank.prefix_m.cols() == 2 * 2 * 4);

    Matrix prompt = encode_prompt(bank, {2, 5, 7}, 3);
    REQUIRE(prompt.rows() == 3);
    CHECK((prompt.row(0) - bank.embeddings.row(2)).isZero(0.0));
    CHECK((prompt.row(1) - bank.embeddings.row(5)).isZero(0.0));
    CHECK((prompt.row(2) - bank.embeddings.row(7)).isZero(0.0));

    Matrix cycled = encode_prompt(bank, {2, 5}, 5);
    REQUIRE(cycled.rows() == 5);
    CHECK((cycled.row(2) - bank.embeddings.row(2)).isZero(0.0));
    CHECK((cycled.row(3) - bank.embeddings.row(5)).isZero(0.0));
    CHECK((cycled.row(4) - bank.embeddings.row(2)).isZero(0.0));

    CHECK_THROWS_AS(encode_prompt(bank, {}, 3), DataError);
    CHECK_THROWS_AS(encode_prompt(bank, {2}, 0), DataError);
}

TEST_CASE("residual projection shifts the prompt away from its base rows") {
    EncoderConfig config = small_config();
    EncoderParams encoder = init_encoder(config, 32);
    PromptBankParams bank = init_prompt_bank(encoder, config, 32);
    bank.residual_w = filled(4, 4, 33);
    bank.residual_b = filled(1, 4, 34);

    Matrix prompt = encode_prompt(bank, {1, 6}, 2);
    Matrix base(2, 4);
    base.row(0) = bank.embeddings.row(1);
    base.row(1) = bank.embeddings.row(6);
    Matrix expected = base + (base * bank.residual_w + bank.residual_b.replicate(2, 1));
    CHECK((prompt - expected).isZero(1e-15));
}

TEST_CASE("a block-identity projection routes the prompt into layer-0 keys only") {
    EncoderConfig config = small_config();
    const int d = config.dim;
    EncoderParams encoder = init_encoder(config, 35);
    PromptBankParams bank = init_prompt_bank(encoder, config, 35);

    // blocks are ordered K0 V0 K1 V1
    bank.prefix_m = Matrix::Zero(d, config.num_layers * 2 * d);
    bank.prefix_m.block(0, 0, d, d) = Matrix::Identity(d, d);

    Matrix prompt = filled(3, d, 36);
    LayerPrefixes prefixes = project_prefix(bank, prompt, config.num_layers, d);
    REQUIRE(prefixes.layers.size() == 2);
    CHECK(prefixes.prompt_len() == 3);
    CHECK((prefixes.layers[0].first - prompt).isZero(0.0));
    CHECK(prefixes.layers[0].second.isZero(0.0));
    CHECK(prefixes.layers[1].first.isZero(0.0));
    CHECK(prefixes.layers[1].second.isZero(0.0));

    CHECK_THROWS_AS(project_prefix(bank, prompt, 3, d), DataError);
}

TEST_CASE("prompt bank gradients match finite differences end to end") {
    EncoderConfig config = small_config();
    EncoderParams encoder = init_encoder(config, 37);
    PromptBankParams bank = init_prompt_bank(encoder, config, 37);
    bank.residual_w = filled(4, 4, 38, -0.3, 0.3);
    bank.residual_b = filled(1, 4, 39, -0.3, 0.3);
    const std::vector<int> words = {2, 5};
    const int prompt_len = 3;

    // analytic pass: weighted sum over every projected key/value entry
    ad::Tape tape;
    PromptVars vars = prompt_leafs(tape, bank);
    ad::Var prompt = encode_prompt(tape, vars, words, prompt_len);
    LayerPrefixVars pv = project_prefix(tape, vars, prompt, config.num_layers, config.dim);
    std::vector<ad::Var> pieces;
    for (size_t i = 0; i < pv.layers.size(); ++i) {
        Matrix wk = filled(prompt_len, config.dim, 700 + 2 * i, 0.25, 1.75);
        Matrix wv = filled(prompt_len, config.dim, 701 + 2 * i, 0.25, 1.75);
        pieces.push_back(tape.dot(pv.layers[i].first, tape.leaf(wk, "wk")));
        pieces.push_back(tape.dot(pv.layers[i].second, tape.leaf(wv, "wv")));
    }
    tape.backward(tape.add_many(pieces));

    auto eval = [&](const PromptBankParams& p) {
        ad::Tape t2;
        PromptVars v2 = prompt_leafs(t2, p);
        ad::Var pr = encode_prompt(t2, v2, words, prompt_len);
        LayerPrefixVars pv2 = project_prefix(t2, v2, pr, config.num_layers, config.dim);
        double acc = 0.0;
        for (size_t i = 0; i < pv2.layers.size(); ++i) {
            Matrix wk = filled(prompt_len, config.dim, 700 + 2 * i, 0.25, 1.75);
            Matrix wv = filled(prompt_len, config.dim, 701 + 2 * i, 0.25, 1.75);
            acc += (t2.value(pv2.layers[i].first).array() * wk.array()).sum();
            acc += (t2.value(pv2.layers[i].second).array() * wv.array()).sum();
        }
        return acc;
    };

    const double step = 1e-6;
    auto fd_check = [&](Matrix& target, const Matrix& analytic) {
        for (long r = 0; r < target.rows(); ++r) {
            for (long c = 0; c < target.cols(); ++c) {
                const double orig = target(r, c);
                target(r, c) = orig + step;
                const double up = eval(bank);
                target(r, c) = orig - step;
                const double down = eval(bank);
                target(r, c) = orig;
                const double fd = (up - down) / (2.0 * step);
                CHECK(std::abs(fd - analytic(r, c)) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    };

    fd_check(bank.embeddings, tape.grad(vars.embeddings));
    fd_check(bank.residual_w, tape.grad(vars.residual_w));
    fd_check(bank.residual_b, tape.grad(vars.residual_b));
    fd_check(bank.prefix_m, tape.grad(vars.prefix_m));

    // only the two referenced embedding rows receive gradient
    Matrix emb_grad = tape.grad(vars.embeddings);
    CHECK_FALSE(emb_grad.row(2).isZero(0.0));
    CHECK_FALSE(emb_grad.row(5).isZero(0.0));
    CHECK(emb_grad.row(0).isZero(0.0));
}

TEST_CASE("prompt assignment takes the restricted argmax, low id on ties") {
    TopicDistribution dist;
    dist.node_ids = {3, 7, 9, 12};
    dist.components = {0.2, 0.5, 0.2, 0.1};

    CHECK(assign_prompt(dist, {3, 7, 9}) == 1);
    CHECK(assign_prompt(dist, {3, 9}) == 0);   // 12 excluded, tie 3 vs 9 -> lower id
    CHECK(assign_prompt(dist, {9, 3}) == 1);   // same tie, index follows the prompt list
    CHECK(assign_prompt(dist, {12}) == 0);

    // scaling every component preserves the decision
    TopicDistribution scaled = dist;
    for (double& c : scaled.components) c *= 2.0;
    CHECK(assign_prompt(scaled, {3, 7, 9}) == assign_prompt(dist, {3, 7, 9}));

    CHECK_THROWS_AS(assign_prompt(dist, {}), DataError);
    CHECK_THROWS_AS(assign_prompt(dist, {3, 8}), DataError);
}
