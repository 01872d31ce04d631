#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "topicdpr/corpus.hpp"
#include "topicdpr/encoder.hpp"

namespace topicdpr {

// Exact-scan cosine index; rows are L2-normalized at build time.
struct DenseIndex {
    Matrix vectors;
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> categories;  // aligned with ids
    uint64_t checkpoint_hash = 0;
    uint64_t topics_hash = 0;
    uint64_t vocab_hash = 0;

    int dim() const { return static_cast<int>(vectors.cols()); }
    int size() const { return static_cast<int>(vectors.rows()); }
};

DenseIndex build_index(const std::vector<Representation>& passages,
                       const std::vector<std::vector<std::string>>& categories);

void save_index(const DenseIndex& index, const std::string& path);
DenseIndex load_index(const std::string& path);

struct ScoredHit {
    std::string id;
    double score;
};

struct RankedList {
    std::string query_id;
    std::vector<ScoredHit> hits;  // descending score, ties by ascending id
};

// k is capped at index size; k < 1 raises DataError.
RankedList search(const DenseIndex& index, const Representation& query, int k);

// Okapi BM25 over passage abstracts, token strings as terms.
struct Bm25Index {
    std::vector<std::string> ids;
    std::vector<std::map<std::string, int>> term_counts;
    std::vector<int> lengths;
    std::map<std::string, int> doc_frequency;
    double avg_length = 0.0;
    double k1 = 1.2;
    double b = 0.75;
};

Bm25Index build_bm25(const std::vector<Document>& passages, double k1 = 1.2, double b = 0.75);
RankedList bm25_search(const Bm25Index& index, const std::vector<std::string>& query_tokens,
                       const std::string& query_id, int k);

// A passage is relevant to a query when the category sets intersect; a
// document's own passage is always relevant.
bool relevant(const std::string& query_id, const std::vector<std::string>& query_categories,
              const std::string& passage_id, const std::vector<std::string>& passage_categories);

struct MetricsReport {
    std::vector<int> k_values;
    std::map<std::string, double> values;  // "acc@k" / "mrr@k" / "map@k"
    int query_count = 0;
    int zero_relevant_queries = 0;  // counted as misses in acc/mrr, excluded from map
};

MetricsReport compute_metrics(
    const std::vector<RankedList>& results,
    const std::function<bool(const std::string&, const std::string&)>& is_relevant,
    const std::function<int(const std::string&)>& total_relevant,
    const std::vector<int>& k_values);

void save_metrics(const MetricsReport& report, const std::string& path);
void save_ranked_lists(const std::vector<RankedList>& results, const std::string& path);

}  // namespace topicdpr
