#include "topicdpr/prompt_bank.hpp"

#include <algorithm>
#include <random>

#include "topicdpr/common.hpp"

namespace topicdpr {

PromptBankParams init_prompt_bank(const EncoderParams& encoder, const EncoderConfig& config,
                                  uint64_t seed) {
    config.validate();
    const int d = config.dim;
    PromptBankParams p;
    p.embeddings = encoder.token_embeddings;
    p.residual_w = Matrix::Zero(d, d);
    p.residual_b = Matrix::Zero(1, d);

    std::mt19937_64 rng(mix_seed(seed, fnv1a64("prefix-init")));
    std::normal_distribution<double> dist(0.0, 0.02);
    p.prefix_m = Matrix(d, config.num_layers * 2 * d);
    for (long r = 0; r < p.prefix_m.rows(); ++r) {
        for (long c = 0; c < p.prefix_m.cols(); ++c) p.prefix_m(r, c) = dist(rng);
    }
    return p;
}

PromptVars prompt_leafs(ad::Tape& tape, const PromptBankParams& params) {
    PromptVars v;
    v.embeddings = tape.leaf(params.embeddings, "prompt/embeddings");
    v.residual_w = tape.leaf(params.residual_w, "prompt/residual_w");
    v.residual_b = tape.leaf(params.residual_b, "prompt/residual_b");
    v.prefix_m = tape.leaf(params.prefix_m, "prompt/prefix_m");
    return v;
}

ad::Var encode_prompt(ad::Tape& tape, const PromptVars& vars, const std::vector<int>& topic_words,
                      int prompt_len) {
    if (topic_words.empty()) throw DataError("topic word list is empty");
    if (prompt_len < 1) throw DataError("prompt length must be >= 1");

    std::vector<int> rows(prompt_len);
    for (int i = 0; i < prompt_len; ++i) {
        rows[i] = topic_words[static_cast<size_t>(i) % topic_words.size()];
    }
    ad::Var base = tape.gather_rows(vars.embeddings, std::move(rows));
    ad::Var projected = tape.add_row_broadcast(tape.matmul(base, vars.residual_w),
                                               vars.residual_b);
    return tape.add(base, projected);
}

Matrix encode_prompt(const PromptBankParams& params, const std::vector<int>& topic_words,
                     int prompt_len) {
    ad::Tape tape;
    PromptVars vars = prompt_leafs(tape, params);
    return tape.value(encode_prompt(tape, vars, topic_words, prompt_len));
}

LayerPrefixVars project_prefix(ad::Tape& tape, const PromptVars& vars, ad::Var prompt,
                               int num_layers, int dim) {
    if (tape.value(vars.prefix_m).cols() != static_cast<long>(num_layers) * 2 * dim) {
        throw DataError("prefix matrix width does not match num_layers * 2 * dim");
    }
    ad::Var projected = tape.matmul(prompt, vars.prefix_m);
    LayerPrefixVars out;
    out.prompt_len = static_cast<int>(tape.value(prompt).rows());
    out.layers.reserve(num_layers);
    for (int i = 0; i < num_layers; ++i) {
        ad::Var k = tape.slice_cols(projected, i * 2 * dim, dim);
        ad::Var v = tape.slice_cols(projected, i * 2 * dim + dim, dim);
        out.layers.emplace_back(k, v);
    }
    return out;
}

LayerPrefixes project_prefix(const PromptBankParams& params, const Matrix& prompt,
                             int num_layers, int dim) {
    ad::Tape tape;
    PromptVars vars = prompt_leafs(tape, params);
    ad::Var p = tape.leaf(prompt, "prompt");
    LayerPrefixVars pv = project_prefix(tape, vars, p, num_layers, dim);
    LayerPrefixes out;
    out.layers.reserve(pv.layers.size());
    for (const auto& [k, v] : pv.layers) {
        out.layers.emplace_back(tape.value(k), tape.value(v));
    }
    return out;
}

int assign_prompt(const TopicDistribution& dist, const std::vector<int64_t>& prompt_topic_ids) {
    if (prompt_topic_ids.empty()) throw DataError("no prompt topics to assign");
    int best = -1;
    double best_mass = -1.0;
    int64_t best_topic = 0;
    for (size_t i = 0; i < prompt_topic_ids.size(); ++i) {
        auto it = std::find(dist.node_ids.begin(), dist.node_ids.end(), prompt_topic_ids[i]);
        if (it == dist.node_ids.end()) {
            throw DataError("prompt topic " + std::to_string(prompt_topic_ids[i]) +
                            " is absent from the distribution");
        }
        double mass = dist.components[it - dist.node_ids.begin()];
        if (mass > best_mass ||
            (mass == best_mass && prompt_topic_ids[i] < best_topic)) {
            best = static_cast<int>(i);
            best_mass = mass;
            best_topic = prompt_topic_ids[i];
        }
    }
    return best;
}

}  // namespace topicdpr
