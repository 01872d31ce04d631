#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicdpr/encoder.hpp"
#include "topicdpr/hlda.hpp"

namespace topicdpr {

// Trainable prompt-side tensors. The embedding table starts as a copy of the
// encoder's token embeddings and diverges from it during training; the
// residual projection starts at zero so a fresh bank reproduces base rows.
struct PromptBankParams {
    Matrix embeddings;  // vocab_size x dim
    Matrix residual_w;  // dim x dim
    Matrix residual_b;  // 1 x dim
    Matrix prefix_m;    // dim x (num_layers * 2 * dim)

    template <class F>
    void visit(F&& f) {
        f("prompt/embeddings", embeddings);
        f("prompt/residual_w", residual_w);
        f("prompt/residual_b", residual_b);
        f("prompt/prefix_m", prefix_m);
    }
    template <class F>
    void visit(F&& f) const { const_cast<PromptBankParams*>(this)->visit(std::forward<F>(f)); }
};

PromptBankParams init_prompt_bank(const EncoderParams& encoder, const EncoderConfig& config,
                                  uint64_t seed);

struct PromptVars {
    ad::Var embeddings, residual_w, residual_b, prefix_m;
};
PromptVars prompt_leafs(ad::Tape& tape, const PromptBankParams& params);

// prompt_len x dim: row i embeds word i of the topic's word list (cycling
// when prompt_len exceeds the list), plus a learned residual projection.
ad::Var encode_prompt(ad::Tape& tape, const PromptVars& vars, const std::vector<int>& topic_words,
                      int prompt_len);
Matrix encode_prompt(const PromptBankParams& params, const std::vector<int>& topic_words,
                     int prompt_len);

// prompt (p x dim) through M, split into per-layer key/value blocks of p x dim.
LayerPrefixVars project_prefix(ad::Tape& tape, const PromptVars& vars, ad::Var prompt,
                               int num_layers, int dim);
LayerPrefixes project_prefix(const PromptBankParams& params, const Matrix& prompt,
                             int num_layers, int dim);

// Argmax of the distribution restricted to the prompt topics; ties go to the
// lowest topic id. Returns an index into prompt_topic_ids.
int assign_prompt(const TopicDistribution& dist, const std::vector<int64_t>& prompt_topic_ids);

}  // namespace topicdpr
