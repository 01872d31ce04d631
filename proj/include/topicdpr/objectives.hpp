#pragma once

#include <string>
#include <vector>

#include "topicdpr/autodiff.hpp"
#include "topicdpr/corpus.hpp"

namespace topicdpr {

struct LossConfig {
    double gamma = 0.05;   // similarity temperature
    double margin = 0.2;   // topic-contrast hinge margin
    double alpha = 0.1;    // mixing weight; total uses (1-2a, a, a)
    void validate() const;
};

// Jaccard overlap of two category sets (sorted vectors). Empty union -> 0.
double correlation(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Per-anchor index lists into the batch. Positives are soft-weighted by
// category correlation; a document's own passage is always a positive with
// weight 1. Everything non-intersecting is a negative.
struct MinedBatch {
    int size = 0;
    std::vector<std::string> ids;
    std::vector<std::vector<int>> positive_queries;
    std::vector<std::vector<double>> positive_query_rho;
    std::vector<std::vector<int>> positive_passages;
    std::vector<std::vector<double>> positive_passage_rho;
    std::vector<std::vector<int>> negative_queries;
    std::vector<std::vector<int>> negative_passages;
};
MinedBatch mine_in_batch(const std::vector<const Document*>& docs);

// Cosine over 1 x dim rows; a zero-norm side raises NumericError.
ad::Var cosine(ad::Tape& tape, ad::Var a, ad::Var b);

// Temperature-scaled InfoNCE with per-positive weights: each positive gets
// its own denominator of itself plus all negatives, terms averaged over
// positives. No positives -> constant 0.
ad::Var contrastive_loss(ad::Tape& tape, ad::Var anchor, const std::vector<ad::Var>& positives,
                         const std::vector<double>& rhos, const std::vector<ad::Var>& negatives,
                         double gamma);

// Hinge pushing same-prompt similarity above cross-prompt similarity:
// mean over z != k and all (i, j) of max(margin - s(p_i^k, p_j^k) + s(p_i^k, p_j^z), 0).
// reps[z][i] is passage i encoded under prompt z.
ad::Var topic_margin_loss(ad::Tape& tape, int k, const std::vector<std::vector<ad::Var>>& reps,
                          double margin);

struct BatchLossVars {
    ad::Var total;
    ad::Var query_passage;  // unweighted mean over active anchors
    ad::Var query_query;
    ad::Var topic;          // unweighted mean over prompts; invalid when unused
    int query_passage_active = 0;
    int query_query_active = 0;
};

// total = (1-2a) * qp + a * qq + a * topic. Anchors without positives drop
// out of the corresponding mean; topic_reps may be empty to skip that term.
BatchLossVars batch_loss(ad::Tape& tape, const MinedBatch& batch,
                         const std::vector<ad::Var>& queries,
                         const std::vector<ad::Var>& passages,
                         const std::vector<std::vector<ad::Var>>& topic_reps,
                         const LossConfig& config);

}  // namespace topicdpr
