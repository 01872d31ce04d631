#include "topicdpr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "topicdpr/common.hpp"
#include "topicdpr/retrieval.hpp"

namespace topicdpr {

namespace {

Eigen::VectorXd normalized(const Representation& rep) {
    double norm = rep.values.norm();
    if (norm == 0.0) {
        throw NumericError("zero-norm representation " + rep.source_id);
    }
    return rep.values / norm;
}

double raw_cosine(const Representation& a, const Representation& b) {
    double na = a.values.norm(), nb = b.values.norm();
    if (na == 0.0 || nb == 0.0) {
        throw NumericError("zero-norm representation in similarity computation");
    }
    return a.values.dot(b.values) / (na * nb);
}

}  // namespace

double alignment(const std::vector<Representation>& a, const std::vector<Representation>& b) {
    if (a.empty() || a.size() != b.size()) {
        throw DataError("alignment needs equally sized, non-empty pair lists");
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += (normalized(a[i]) - normalized(b[i])).squaredNorm();
    }
    return acc / static_cast<double>(a.size());
}

double uniformity(const std::vector<Representation>& reps) {
    if (reps.size() < 2) throw DataError("uniformity needs at least two representations");
    std::vector<Eigen::VectorXd> unit;
    unit.reserve(reps.size());
    for (const auto& r : reps) unit.push_back(normalized(r));

    double acc = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < unit.size(); ++i) {
        for (size_t j = i + 1; j < unit.size(); ++j) {
            acc += std::exp(-2.0 * (unit[i] - unit[j]).squaredNorm());
            ++count;
        }
    }
    return std::log(acc / static_cast<double>(count));
}

SimilarityGap similarity_gap(const std::vector<Representation>& queries,
                             const std::vector<std::vector<std::string>>& query_categories,
                             const std::vector<Representation>& passages,
                             const std::vector<std::vector<std::string>>& passage_categories,
                             int sample_pairs, uint64_t seed) {
    if (queries.empty() || passages.empty()) throw DataError("no representations to compare");
    if (queries.size() != query_categories.size() ||
        passages.size() != passage_categories.size()) {
        throw DataError("category lists misaligned with representations");
    }
    if (sample_pairs < 1) throw DataError("sample_pairs must be >= 1");

    std::vector<std::pair<int, int>> positive, negative;
    for (size_t i = 0; i < queries.size(); ++i) {
        for (size_t j = 0; j < passages.size(); ++j) {
            bool rel = relevant(queries[i].source_id, query_categories[i],
                                passages[j].source_id, passage_categories[j]);
            (rel ? positive : negative).emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }
    if (positive.empty() || negative.empty()) {
        throw DataError("similarity gap needs both relevant and irrelevant pairs");
    }

    std::mt19937_64 rng(mix_seed(seed, fnv1a64("simgap")));
    auto subsample = [&](std::vector<std::pair<int, int>>& pairs) {
        if (static_cast<int>(pairs.size()) > sample_pairs) {
            std::shuffle(pairs.begin(), pairs.end(), rng);
            pairs.resize(sample_pairs);
        }
    };
    subsample(positive);
    subsample(negative);

    SimilarityGap out;
    for (const auto& [i, j] : positive) out.positive_mean += raw_cosine(queries[i], passages[j]);
    for (const auto& [i, j] : negative) out.negative_mean += raw_cosine(queries[i], passages[j]);
    out.positive_mean /= static_cast<double>(positive.size());
    out.negative_mean /= static_cast<double>(negative.size());
    out.gap = out.positive_mean - out.negative_mean;
    out.positive_pairs = static_cast<int>(positive.size());
    out.negative_pairs = static_cast<int>(negative.size());
    return out;
}

DiagnosticsReport diagnostics_report(const std::vector<Representation>& queries,
                                     const std::vector<std::vector<std::string>>& query_categories,
                                     const std::vector<Representation>& passages,
                                     const std::vector<std::vector<std::string>>& passage_categories,
                                     int sample_pairs, uint64_t seed) {
    std::map<std::string, const Representation*> by_id;
    for (const auto& p : passages) by_id[p.source_id] = &p;

    std::vector<Representation> anchors, mates;
    for (const auto& q : queries) {
        auto it = by_id.find(q.source_id);
        if (it == by_id.end()) {
            throw DataError("query without matching passage: " + q.source_id);
        }
        anchors.push_back(q);
        mates.push_back(*it->second);
    }

    DiagnosticsReport report;
    report.align_query_positive = alignment(anchors, mates);
    report.uniform_queries = uniformity(queries);
    report.uniform_passages = uniformity(passages);
    report.similarity = similarity_gap(queries, query_categories, passages, passage_categories,
                                       sample_pairs, seed);
    report.query_count = static_cast<int>(queries.size());
    report.passage_count = static_cast<int>(passages.size());
    return report;
}

void save_diagnostics(const DiagnosticsReport& report, const std::string& path) {
    nlohmann::json j;
    j["align_query_positive"] = report.align_query_positive;
    j["uniform_queries"] = report.uniform_queries;
    j["uniform_passages"] = report.uniform_passages;
    j["mean_sim_positive"] = report.similarity.positive_mean;
    j["mean_sim_negative"] = report.similarity.negative_mean;
    j["similarity_gap"] = report.similarity.gap;
    j["positive_pairs"] = report.similarity.positive_pairs;
    j["negative_pairs"] = report.similarity.negative_pairs;
    j["query_count"] = report.query_count;
    j["passage_count"] = report.passage_count;
    j["similarity_convention"] = DiagnosticsReport::kSimilarityConvention;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write diagnostics report: " + path);
    f << j.dump(2) << '\n';
}

void export_embeddings(const std::vector<Representation>& reps,
                       const std::vector<std::string>& labels, const std::string& path) {
    if (!reps.empty() && labels.size() != reps.size()) {
        throw DataError("label list misaligned with representations");
    }
    std::ofstream f(path);
    if (!f) throw DataError("cannot write embeddings: " + path);
    f << "id\trole\tlabel";
    if (!reps.empty()) {
        for (long d = 0; d < reps[0].values.size(); ++d) f << "\tv" << d;
    }
    f << '\n';
    char buf[64];
    for (size_t i = 0; i < reps.size(); ++i) {
        f << reps[i].source_id << '\t' << role_name(reps[i].role) << '\t' << labels[i];
        for (long d = 0; d < reps[i].values.size(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", reps[i].values(d));
            f << '\t' << buf;
        }
        f << '\n';
    }
}

}  // namespace topicdpr
