#include "topicdpr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "topicdpr/common.hpp"

namespace topicdpr {

void LossConfig::validate() const {
    if (!(gamma > 0.0)) throw DataError("temperature must be positive");
    if (margin < 0.0) throw DataError("margin must be non-negative");
    if (alpha < 0.0 || alpha >= 0.5) throw DataError("alpha must lie in [0, 0.5)");
}

double correlation(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t i = 0, j = 0, both = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++both;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    size_t either = a.size() + b.size() - both;
    return static_cast<double>(both) / static_cast<double>(either);
}

MinedBatch mine_in_batch(const std::vector<const Document*>& docs) {
    const int n = static_cast<int>(docs.size());
    if (n < 2) throw DataError("mining needs at least two documents");

    MinedBatch batch;
    batch.size = n;
    batch.ids.reserve(n);
    for (const auto* d : docs) batch.ids.push_back(d->id);
    batch.positive_queries.resize(n);
    batch.positive_query_rho.resize(n);
    batch.positive_passages.resize(n);
    batch.positive_passage_rho.resize(n);
    batch.negative_queries.resize(n);
    batch.negative_passages.resize(n);

    for (int i = 0; i < n; ++i) {
        batch.positive_passages[i].push_back(i);
        batch.positive_passage_rho[i].push_back(1.0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double rho = correlation(docs[i]->categories, docs[j]->categories);
            if (rho > 0.0) {
                batch.positive_queries[i].push_back(j);
                batch.positive_query_rho[i].push_back(rho);
                batch.positive_passages[i].push_back(j);
                batch.positive_passage_rho[i].push_back(rho);
            } else {
                batch.negative_queries[i].push_back(j);
                batch.negative_passages[i].push_back(j);
            }
        }
    }
    return batch;
}

ad::Var cosine(ad::Tape& tape, ad::Var a, ad::Var b) {
    ad::Var na = tape.sqrt(tape.dot(a, a));
    ad::Var nb = tape.sqrt(tape.dot(b, b));
    if (tape.value(na)(0, 0) == 0.0 || tape.value(nb)(0, 0) == 0.0) {
        throw NumericError("cosine of a zero-norm representation is undefined");
    }
    return tape.div(tape.dot(a, b), tape.mul(na, nb));
}

namespace {

// max-shifted log(sum(exp(x_i))) over 1x1 vars
ad::Var log_sum_exp(ad::Tape& tape, const std::vector<ad::Var>& xs) {
    double mx = tape.value(xs[0])(0, 0);
    for (const auto& x : xs) mx = std::max(mx, tape.value(x)(0, 0));
    std::vector<ad::Var> shifted;
    shifted.reserve(xs.size());
    for (const auto& x : xs) shifted.push_back(tape.exp(tape.add_const(x, -mx)));
    return tape.add_const(tape.log(tape.add_many(shifted)), mx);
}

}  // namespace

ad::Var contrastive_loss(ad::Tape& tape, ad::Var anchor, const std::vector<ad::Var>& positives,
                         const std::vector<double>& rhos, const std::vector<ad::Var>& negatives,
                         double gamma) {
    if (positives.size() != rhos.size()) throw DataError("positives and weights misaligned");
    if (!(gamma > 0.0)) throw DataError("temperature must be positive");
    if (positives.empty()) return tape.constant(0.0, "contrastive_empty");

    const double inv_gamma = 1.0 / gamma;
    std::vector<ad::Var> neg_sims;
    neg_sims.reserve(negatives.size());
    for (const auto& n : negatives) {
        neg_sims.push_back(tape.scale(cosine(tape, anchor, n), inv_gamma));
    }

    std::vector<ad::Var> terms;
    terms.reserve(positives.size());
    for (size_t z = 0; z < positives.size(); ++z) {
        ad::Var sp = tape.scale(cosine(tape, anchor, positives[z]), inv_gamma);
        std::vector<ad::Var> cand;
        cand.reserve(1 + neg_sims.size());
        cand.push_back(sp);
        for (const auto& s : neg_sims) cand.push_back(s);
        ad::Var log_prob = tape.sub(sp, log_sum_exp(tape, cand));
        terms.push_back(tape.scale(log_prob, rhos[z]));
    }
    return tape.scale(tape.add_many(terms), -1.0 / static_cast<double>(positives.size()));
}

ad::Var topic_margin_loss(ad::Tape& tape, int k, const std::vector<std::vector<ad::Var>>& reps,
                          double margin) {
    const int num_prompts = static_cast<int>(reps.size());
    if (num_prompts < 2) throw DataError("topic contrast needs at least two prompts");
    if (k < 0 || k >= num_prompts) throw DataError("prompt index out of range");
    const int n = static_cast<int>(reps[k].size());
    if (n < 1) throw DataError("topic contrast needs at least one passage");
    for (const auto& row : reps) {
        if (static_cast<int>(row.size()) != n) throw DataError("ragged representation grid");
    }

    std::vector<ad::Var> terms;
    terms.reserve(static_cast<size_t>(num_prompts - 1) * n * n);
    for (int i = 0; i < n; ++i) {
        std::vector<ad::Var> same(n);
        for (int j = 0; j < n; ++j) same[j] = cosine(tape, reps[k][i], reps[k][j]);
        for (int z = 0; z < num_prompts; ++z) {
            if (z == k) continue;
            for (int j = 0; j < n; ++j) {
                ad::Var cross = cosine(tape, reps[k][i], reps[z][j]);
                ad::Var gap = tape.add_const(tape.sub(cross, same[j]), margin);
                terms.push_back(tape.relu(gap));
            }
        }
    }
    const double scale = 1.0 / (static_cast<double>(num_prompts - 1) * n * n);
    return tape.scale(tape.add_many(terms), scale);
}

BatchLossVars batch_loss(ad::Tape& tape, const MinedBatch& batch,
                         const std::vector<ad::Var>& queries,
                         const std::vector<ad::Var>& passages,
                         const std::vector<std::vector<ad::Var>>& topic_reps,
                         const LossConfig& config) {
    config.validate();
    if (static_cast<int>(queries.size()) != batch.size ||
        static_cast<int>(passages.size()) != batch.size) {
        throw DataError("batch representations misaligned with mined batch");
    }

    BatchLossVars out;
    std::vector<ad::Var> qp_terms, qq_terms;
    for (int i = 0; i < batch.size; ++i) {
        if (!batch.positive_passages[i].empty()) {
            std::vector<ad::Var> pos, neg;
            for (int j : batch.positive_passages[i]) pos.push_back(passages[j]);
            for (int j : batch.negative_passages[i]) neg.push_back(passages[j]);
            qp_terms.push_back(contrastive_loss(tape, queries[i], pos,
                                                batch.positive_passage_rho[i], neg,
                                                config.gamma));
        }
        if (!batch.positive_queries[i].empty()) {
            std::vector<ad::Var> pos, neg;
            for (int j : batch.positive_queries[i]) pos.push_back(queries[j]);
            for (int j : batch.negative_queries[i]) neg.push_back(queries[j]);
            qq_terms.push_back(contrastive_loss(tape, queries[i], pos,
                                                batch.positive_query_rho[i], neg,
                                                config.gamma));
        }
    }
    out.query_passage_active = static_cast<int>(qp_terms.size());
    out.query_query_active = static_cast<int>(qq_terms.size());

    std::vector<ad::Var> pieces;
    if (!qp_terms.empty()) {
        out.query_passage = tape.scale(tape.add_many(qp_terms),
                                       1.0 / static_cast<double>(qp_terms.size()));
        pieces.push_back(tape.scale(out.query_passage, 1.0 - 2.0 * config.alpha));
    } else {
        out.query_passage = tape.constant(0.0, "qp_inactive");
    }
    if (!qq_terms.empty()) {
        out.query_query = tape.scale(tape.add_many(qq_terms),
                                     1.0 / static_cast<double>(qq_terms.size()));
        pieces.push_back(tape.scale(out.query_query, config.alpha));
    } else {
        out.query_query = tape.constant(0.0, "qq_inactive");
    }
    if (!topic_reps.empty()) {
        const int num_prompts = static_cast<int>(topic_reps.size());
        std::vector<ad::Var> per_prompt;
        per_prompt.reserve(num_prompts);
        for (int k = 0; k < num_prompts; ++k) {
            per_prompt.push_back(topic_margin_loss(tape, k, topic_reps, config.margin));
        }
        out.topic = tape.scale(tape.add_many(per_prompt),
                               1.0 / static_cast<double>(num_prompts));
        pieces.push_back(tape.scale(out.topic, config.alpha));
    } else {
        out.topic = tape.constant(0.0, "topic_inactive");
    }

    out.total = pieces.empty() ? tape.constant(0.0, "loss_empty") : tape.add_many(pieces);
    return out;
}

}  // namespace topicdpr
