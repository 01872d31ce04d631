#include "topicdpr/encoder.hpp"

#include <cmath>
#include <random>

#include "topicdpr/common.hpp"

namespace topicdpr {

void EncoderConfig::validate() const {
    if (dim < 1 || num_layers < 1 || heads < 1 || ff_dim < 1 || max_len < 1) {
        throw DataError("encoder dimensions must be positive");
    }
    if (dim % heads != 0) throw DataError("dim must be divisible by heads");
    if (vocab_size < 1) throw DataError("encoder vocab_size is unset");
}

const char* role_name(Role role) { return role == Role::kQuery ? "query" : "passage"; }

int LayerPrefixes::prompt_len() const {
    return layers.empty() ? 0 : static_cast<int>(layers[0].first.rows());
}

namespace {

Matrix normal_matrix(long rows, long cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(mix_seed(seed, fnv1a64("encoder-init")));
    const int d = config.dim;

    EncoderParams p;
    p.token_embeddings = normal_matrix(config.vocab_size, d, 0.02, rng);
    p.position_embeddings = normal_matrix(config.max_len, d, 0.02, rng);
    p.layers.resize(config.num_layers);
    for (auto& l : p.layers) {
        l.wq = normal_matrix(d, d, 0.02, rng);
        l.bq = Matrix::Zero(1, d);
        l.wk = normal_matrix(d, d, 0.02, rng);
        l.bk = Matrix::Zero(1, d);
        l.wv = normal_matrix(d, d, 0.02, rng);
        l.bv = Matrix::Zero(1, d);
        l.wo = normal_matrix(d, d, 0.02, rng);
        l.bo = Matrix::Zero(1, d);
        l.w1 = normal_matrix(d, config.ff_dim, 0.02, rng);
        l.b1 = Matrix::Zero(1, config.ff_dim);
        l.w2 = normal_matrix(config.ff_dim, d, 0.02, rng);
        l.b2 = Matrix::Zero(1, d);
        l.ln1_gain = Matrix::Ones(1, d);
        l.ln1_offset = Matrix::Zero(1, d);
        l.ln2_gain = Matrix::Ones(1, d);
        l.ln2_offset = Matrix::Zero(1, d);
    }
    return p;
}

EncoderVars encoder_leafs(ad::Tape& tape, const EncoderParams& params) {
    EncoderVars v;
    v.token_embeddings = tape.leaf(params.token_embeddings, "encoder/token_embeddings");
    v.position_embeddings = tape.leaf(params.position_embeddings, "encoder/position_embeddings");
    v.layers.resize(params.layers.size());
    for (size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        auto& lv = v.layers[i];
        const std::string p = "encoder/layer" + std::to_string(i) + "/";
        lv.wq = tape.leaf(l.wq, p + "wq"); lv.bq = tape.leaf(l.bq, p + "bq");
        lv.wk = tape.leaf(l.wk, p + "wk"); lv.bk = tape.leaf(l.bk, p + "bk");
        lv.wv = tape.leaf(l.wv, p + "wv"); lv.bv = tape.leaf(l.bv, p + "bv");
        lv.wo = tape.leaf(l.wo, p + "wo"); lv.bo = tape.leaf(l.bo, p + "bo");
        lv.w1 = tape.leaf(l.w1, p + "w1"); lv.b1 = tape.leaf(l.b1, p + "b1");
        lv.w2 = tape.leaf(l.w2, p + "w2"); lv.b2 = tape.leaf(l.b2, p + "b2");
        lv.ln1_gain = tape.leaf(l.ln1_gain, p + "ln1_gain");
        lv.ln1_offset = tape.leaf(l.ln1_offset, p + "ln1_offset");
        lv.ln2_gain = tape.leaf(l.ln2_gain, p + "ln2_gain");
        lv.ln2_offset = tape.leaf(l.ln2_offset, p + "ln2_offset");
    }
    return v;
}

ad::Var attend_with_prefix(ad::Tape& tape, ad::Var hidden, const EncoderLayerVars& layer,
                           ad::Var k_prompt, ad::Var v_prompt, const EncoderConfig& config) {
    const int dh = config.head_dim();
    const bool with_prefix =
        k_prompt.valid() && v_prompt.valid() && tape.value(k_prompt).rows() > 0;

    ad::Var q = tape.add_row_broadcast(tape.matmul(hidden, layer.wq), layer.bq);
    ad::Var k = tape.add_row_broadcast(tape.matmul(hidden, layer.wk), layer.bk);
    ad::Var v = tape.add_row_broadcast(tape.matmul(hidden, layer.wv), layer.bv);
    if (with_prefix) {
        k = tape.concat_rows(k_prompt, k);
        v = tape.concat_rows(v_prompt, v);
    }

    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    ad::Var context;
    for (int h = 0; h < config.heads; ++h) {
        ad::Var qh = tape.slice_cols(q, h * dh, dh);
        ad::Var kh = tape.slice_cols(k, h * dh, dh);
        ad::Var vh = tape.slice_cols(v, h * dh, dh);
        ad::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_scale);
        ad::Var weights = tape.softmax_rows(scores);
        ad::Var ctx = tape.matmul(weights, vh);
        context = h == 0 ? ctx : tape.concat_cols(context, ctx);
    }
    return tape.add_row_broadcast(tape.matmul(context, layer.wo), layer.bo);
}

ad::Var encode_tokens(ad::Tape& tape, const EncoderVars& vars, const EncoderConfig& config,
                      const std::vector<int>& tokens, const LayerPrefixVars* prefixes,
                      bool* truncated) {
    if (tokens.empty()) throw DataError("cannot encode an empty token sequence");
    if (prefixes != nullptr && !prefixes->layers.empty() &&
        static_cast<int>(prefixes->layers.size()) != config.num_layers) {
        throw DataError("prefix layer count does not match the encoder");
    }

    std::vector<int> ids = tokens;
    bool cut = false;
    if (static_cast<int>(ids.size()) > config.max_len) {
        ids.resize(config.max_len);
        cut = true;
    }
    if (truncated != nullptr) *truncated = cut;

    std::vector<int> positions(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);

    ad::Var h = tape.add(tape.gather_rows(vars.token_embeddings, ids),
                         tape.gather_rows(vars.position_embeddings, positions));

    const bool with_prefix =
        prefixes != nullptr && !prefixes->layers.empty() && prefixes->prompt_len > 0;
    for (int i = 0; i < config.num_layers; ++i) {
        const EncoderLayerVars& l = vars.layers[i];
        ad::Var kp, vp;
        if (with_prefix) {
            kp = prefixes->layers[i].first;
            vp = prefixes->layers[i].second;
        }
        ad::Var attn = attend_with_prefix(tape, h, l, kp, vp, config);
        h = tape.layer_norm_rows(tape.add(h, attn), l.ln1_gain, l.ln1_offset, config.ln_eps);
        ad::Var ff = tape.add_row_broadcast(tape.matmul(h, l.w1), l.b1);
        ff = tape.gelu(ff);
        ff = tape.add_row_broadcast(tape.matmul(ff, l.w2), l.b2);
        h = tape.layer_norm_rows(tape.add(h, ff), l.ln2_gain, l.ln2_offset, config.ln_eps);
    }
    return tape.slice_rows(h, 0, 1);
}

Matrix attend_with_prefix(const EncoderParams& params, int layer_index, const Matrix& hidden,
                          const Matrix& k_prompt, const Matrix& v_prompt,
                          const EncoderConfig& config) {
    if (layer_index < 0 || layer_index >= static_cast<int>(params.layers.size())) {
        throw DataError("layer index out of range");
    }
    ad::Tape tape;
    EncoderVars vars = encoder_leafs(tape, params);
    ad::Var h = tape.leaf(hidden, "hidden");
    ad::Var kp, vp;
    if (k_prompt.rows() > 0) {
        kp = tape.leaf(k_prompt, "k_prompt");
        vp = tape.leaf(v_prompt, "v_prompt");
    }
    ad::Var out = attend_with_prefix(tape, h, vars.layers[layer_index], kp, vp, config);
    return tape.value(out);
}

Representation encode(const EncoderParams& params, const EncoderConfig& config,
                      const std::vector<int>& tokens, const LayerPrefixes* prefixes,
                      Role role, const std::string& source_id, int prompt_index) {
    ad::Tape tape;
    EncoderVars vars = encoder_leafs(tape, params);
    LayerPrefixVars pv;
    if (prefixes != nullptr && !prefixes->layers.empty() && prefixes->prompt_len() > 0) {
        pv.prompt_len = prefixes->prompt_len();
        for (const auto& [kp, vp] : prefixes->layers) {
            pv.layers.emplace_back(tape.leaf(kp, "k_prompt"), tape.leaf(vp, "v_prompt"));
        }
    }
    bool truncated = false;
    ad::Var out = encode_tokens(tape, vars, config, tokens,
                                pv.layers.empty() ? nullptr : &pv, &truncated);

    Representation rep;
    rep.values = tape.value(out).row(0).transpose();
    rep.source_id = source_id;
    rep.role = role;
    rep.prompt_index = prompt_index;
    rep.truncated = truncated;
    return rep;
}

}  // namespace topicdpr
