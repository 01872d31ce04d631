#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicdpr/autodiff.hpp"

namespace topicdpr {

using ad::Matrix;

struct EncoderConfig {
    int dim = 64;
    int num_layers = 2;
    int heads = 4;
    int ff_dim = 256;
    int max_len = 64;
    int vocab_size = 0;  // rows of the token table: retained + unknown
    double ln_eps = 1e-6;

    int head_dim() const { return dim / heads; }
    void validate() const;
};

struct EncoderLayerParams {
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections
    Matrix w1, b1, w2, b2;                  // feed-forward
    Matrix ln1_gain, ln1_offset, ln2_gain, ln2_offset;
};

struct EncoderParams {
    Matrix token_embeddings;     // vocab_size x dim
    Matrix position_embeddings;  // max_len x dim
    std::vector<EncoderLayerParams> layers;

    // Enumerates every tensor with a stable name ("encoder/layer0/wq", ...).
    template <class F>
    void visit(F&& f) {
        f("encoder/token_embeddings", token_embeddings);
        f("encoder/position_embeddings", position_embeddings);
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string p = "encoder/layer" + std::to_string(i) + "/";
            EncoderLayerParams& l = layers[i];
            f(p + "wq", l.wq); f(p + "bq", l.bq);
            f(p + "wk", l.wk); f(p + "bk", l.bk);
            f(p + "wv", l.wv); f(p + "bv", l.bv);
            f(p + "wo", l.wo); f(p + "bo", l.bo);
            f(p + "w1", l.w1); f(p + "b1", l.b1);
            f(p + "w2", l.w2); f(p + "b2", l.b2);
            f(p + "ln1_gain", l.ln1_gain); f(p + "ln1_offset", l.ln1_offset);
            f(p + "ln2_gain", l.ln2_gain); f(p + "ln2_offset", l.ln2_offset);
        }
    }
    template <class F>
    void visit(F&& f) const { const_cast<EncoderParams*>(this)->visit(std::forward<F>(f)); }
};

// Weights drawn from normal(0, 0.02), biases and offsets zero, gains one.
EncoderParams init_encoder(const EncoderConfig& config, uint64_t seed);

// Per-layer (key rows, value rows) injected ahead of the input's own keys and
// values; each matrix is prompt_len x dim. Empty (0-row) prefixes are allowed.
struct LayerPrefixes {
    std::vector<std::pair<Matrix, Matrix>> layers;
    int prompt_len() const;
};

enum class Role { kQuery, kPassage };
const char* role_name(Role role);

struct Representation {
    Eigen::VectorXd values;
    std::string source_id;
    Role role = Role::kQuery;
    int prompt_index = -1;  // -1 when encoded without a prompt
    bool truncated = false;
};

// Tape-side parameter handles so training and inference share one forward.
struct EncoderLayerVars {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Var w1, b1, w2, b2;
    ad::Var ln1_gain, ln1_offset, ln2_gain, ln2_offset;
};
struct EncoderVars {
    ad::Var token_embeddings, position_embeddings;
    std::vector<EncoderLayerVars> layers;
};
EncoderVars encoder_leafs(ad::Tape& tape, const EncoderParams& params);

struct LayerPrefixVars {
    std::vector<std::pair<ad::Var, ad::Var>> layers;
    int prompt_len = 0;
};

// One attention block: queries come from the input only; prefix key/value
// rows are prepended to the input's keys and values, so softmax rows span
// prompt_len + n positions. Invalid prefix vars mean no prefix.
ad::Var attend_with_prefix(ad::Tape& tape, ad::Var hidden, const EncoderLayerVars& layer,
                           ad::Var k_prompt, ad::Var v_prompt, const EncoderConfig& config);

// Full forward pass; returns the position-0 output row (1 x dim). Sequences
// longer than max_len are truncated and flagged.
ad::Var encode_tokens(ad::Tape& tape, const EncoderVars& vars, const EncoderConfig& config,
                      const std::vector<int>& tokens, const LayerPrefixVars* prefixes,
                      bool* truncated);

// Plain-matrix wrappers; these run the same tape ops and discard the tape, so
// results match the training path bit for bit.
Matrix attend_with_prefix(const EncoderParams& params, int layer_index, const Matrix& hidden,
                          const Matrix& k_prompt, const Matrix& v_prompt,
                          const EncoderConfig& config);
Representation encode(const EncoderParams& params, const EncoderConfig& config,
                      const std::vector<int>& tokens, const LayerPrefixes* prefixes,
                      Role role, const std::string& source_id, int prompt_index);

}  // namespace topicdpr
