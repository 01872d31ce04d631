#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topicdpr/encoder.hpp"

namespace topicdpr {

// Mean squared distance between L2-normalized paired representations.
// Identical pairs give 0, orthogonal 2, antipodal 4.
double alignment(const std::vector<Representation>& a, const std::vector<Representation>& b);

// log of the mean Gaussian-kernel value exp(-2 ||f(x)-f(y)||^2) over all
// unordered distinct pairs. More negative means more dispersed.
double uniformity(const std::vector<Representation>& reps);

struct SimilarityGap {
    double positive_mean = 0.0;  // mean cosine over sampled relevant pairs
    double negative_mean = 0.0;  // mean cosine over sampled irrelevant pairs
    double gap = 0.0;
    int positive_pairs = 0;
    int negative_pairs = 0;
};

// Samples up to sample_pairs query/passage pairs per side (seeded) and
// averages raw cosine similarity, reported on the [-1, 1] convention.
SimilarityGap similarity_gap(const std::vector<Representation>& queries,
                             const std::vector<std::vector<std::string>>& query_categories,
                             const std::vector<Representation>& passages,
                             const std::vector<std::vector<std::string>>& passage_categories,
                             int sample_pairs, uint64_t seed);

// Tab-separated: id, role, label, then the vector entries at full precision.
void export_embeddings(const std::vector<Representation>& reps,
                       const std::vector<std::string>& labels, const std::string& path);

struct DiagnosticsReport {
    double align_query_positive = 0.0;  // over (title, own abstract) pairs
    double uniform_queries = 0.0;
    double uniform_passages = 0.0;
    SimilarityGap similarity;
    int query_count = 0;
    int passage_count = 0;
    // Similarities are raw cosine in [-1, 1], not the x100 convention.
    static constexpr const char* kSimilarityConvention = "raw_cosine";
};

// Queries and passages must cover the same source ids (the alignment pairs).
DiagnosticsReport diagnostics_report(const std::vector<Representation>& queries,
                                     const std::vector<std::vector<std::string>>& query_categories,
                                     const std::vector<Representation>& passages,
                                     const std::vector<std::vector<std::string>>& passage_categories,
                                     int sample_pairs, uint64_t seed);

void save_diagnostics(const DiagnosticsReport& report, const std::string& path);

}  // namespace topicdpr
