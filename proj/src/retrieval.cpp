#include "topicdpr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "topicdpr/common.hpp"

namespace topicdpr {

using nlohmann::json;

DenseIndex build_index(const std::vector<Representation>& passages,
                       const std::vector<std::vector<std::string>>& categories) {
    if (passages.empty()) throw DataError("cannot build an index with no passages");
    if (categories.size() != passages.size()) {
        throw DataError("category list misaligned with passages");
    }
    DenseIndex index;
    index.vectors.resize(static_cast<long>(passages.size()), passages[0].values.size());
    std::set<std::string> seen;
    for (size_t i = 0; i < passages.size(); ++i) {
        const Representation& rep = passages[i];
        if (rep.values.size() != index.vectors.cols()) {
            throw DataError("representation dimension mismatch at passage " + rep.source_id);
        }
        if (!seen.insert(rep.source_id).second) {
            throw DataError("duplicate passage id in index: " + rep.source_id);
        }
        double norm = rep.values.norm();
        if (norm == 0.0) {
            throw NumericError("zero-norm representation for passage " + rep.source_id);
        }
        index.vectors.row(static_cast<long>(i)) = rep.values.transpose() / norm;
        index.ids.push_back(rep.source_id);
        index.categories.push_back(categories[i]);
    }
    return index;
}

RankedList search(const DenseIndex& index, const Representation& query, int k) {
    if (k < 1) throw DataError("k must be >= 1");
    if (query.values.size() != index.vectors.cols()) {
        throw DataError("query dimension does not match the index");
    }
    double norm = query.values.norm();
    if (norm == 0.0) throw NumericError("zero-norm query representation " + query.source_id);
    Eigen::VectorXd scores = index.vectors * (query.values / norm);

    std::vector<int> order(index.size());
    for (int i = 0; i < index.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return index.ids[a] < index.ids[b];
    });

    RankedList out;
    out.query_id = query.source_id;
    const int take = std::min(k, index.size());
    out.hits.reserve(take);
    for (int i = 0; i < take; ++i) {
        out.hits.push_back(ScoredHit{index.ids[order[i]], scores(order[i])});
    }
    return out;
}

namespace {

constexpr uint32_t kIndexMagic = 0x58444954;  // "TIDX"

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated index file");
    return v;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
    uint32_t len = read_pod<uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw DataError("truncated index file");
    return s;
}

}  // namespace

void save_index(const DenseIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write index: " + path);
    write_pod<uint32_t>(out, kIndexMagic);
    write_pod<uint32_t>(out, 1);
    write_pod<uint64_t>(out, index.checkpoint_hash);
    write_pod<uint64_t>(out, index.topics_hash);
    write_pod<uint64_t>(out, index.vocab_hash);
    write_pod<uint64_t>(out, static_cast<uint64_t>(index.size()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(index.dim()));
    for (int i = 0; i < index.size(); ++i) {
        write_string(out, index.ids[i]);
        write_pod<uint32_t>(out, static_cast<uint32_t>(index.categories[i].size()));
        for (const auto& c : index.categories[i]) write_string(out, c);
        // row() of a column-major matrix is strided; copy before writing
        Eigen::VectorXd row = index.vectors.row(i);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(sizeof(double)) * index.dim());
    }
}

DenseIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index: " + path);
    if (read_pod<uint32_t>(in) != kIndexMagic) throw DataError("not an index file: " + path);
    if (read_pod<uint32_t>(in) != 1) throw DataError("unsupported index version in " + path);
    DenseIndex index;
    index.checkpoint_hash = read_pod<uint64_t>(in);
    index.topics_hash = read_pod<uint64_t>(in);
    index.vocab_hash = read_pod<uint64_t>(in);
    uint64_t rows = read_pod<uint64_t>(in);
    uint64_t cols = read_pod<uint64_t>(in);
    index.vectors.resize(static_cast<long>(rows), static_cast<long>(cols));
    for (uint64_t i = 0; i < rows; ++i) {
        index.ids.push_back(read_string(in));
        uint32_t ncats = read_pod<uint32_t>(in);
        std::vector<std::string> cats;
        for (uint32_t c = 0; c < ncats; ++c) cats.push_back(read_string(in));
        index.categories.push_back(std::move(cats));
        Eigen::VectorXd row(static_cast<long>(cols));
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(sizeof(double)) * static_cast<long>(cols));
        if (!in) throw DataError("truncated index file");
        index.vectors.row(static_cast<long>(i)) = row.transpose();
    }
    return index;
}

Bm25Index build_bm25(const std::vector<Document>& passages, double k1, double b) {
    if (passages.empty()) throw DataError("cannot build a ranking over no passages");
    if (!(k1 >= 0.0) || b < 0.0 || b > 1.0) throw DataError("invalid ranking parameters");
    Bm25Index index;
    index.k1 = k1;
    index.b = b;
    double total_len = 0.0;
    std::set<std::string> seen;
    for (const auto& doc : passages) {
        if (!seen.insert(doc.id).second) throw DataError("duplicate passage id: " + doc.id);
        std::map<std::string, int> counts;
        for (const auto& t : doc.abstract_text) ++counts[t];
        for (const auto& [t, c] : counts) ++index.doc_frequency[t];
        index.ids.push_back(doc.id);
        index.lengths.push_back(static_cast<int>(doc.abstract_text.size()));
        index.term_counts.push_back(std::move(counts));
        total_len += static_cast<double>(doc.abstract_text.size());
    }
    index.avg_length = total_len / static_cast<double>(passages.size());
    return index;
}

RankedList bm25_search(const Bm25Index& index, const std::vector<std::string>& query_tokens,
                       const std::string& query_id, int k) {
    if (k < 1) throw DataError("k must be >= 1");
    const double m = static_cast<double>(index.ids.size());
    std::vector<double> scores(index.ids.size(), 0.0);
    for (const auto& term : query_tokens) {
        auto dit = index.doc_frequency.find(term);
        if (dit == index.doc_frequency.end()) continue;
        const double df = static_cast<double>(dit->second);
        const double idf = std::log(1.0 + (m - df + 0.5) / (df + 0.5));
        for (size_t d = 0; d < index.ids.size(); ++d) {
            auto tit = index.term_counts[d].find(term);
            if (tit == index.term_counts[d].end()) continue;
            const double tf = static_cast<double>(tit->second);
            const double len_ratio = static_cast<double>(index.lengths[d]) / index.avg_length;
            scores[d] += idf * (tf * (index.k1 + 1.0)) /
                         (tf + index.k1 * (1.0 - index.b + index.b * len_ratio));
        }
    }

    std::vector<int> order(index.ids.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return index.ids[a] < index.ids[b];
    });

    RankedList out;
    out.query_id = query_id;
    const int take = std::min<int>(k, static_cast<int>(index.ids.size()));
    for (int i = 0; i < take; ++i) {
        out.hits.push_back(ScoredHit{index.ids[order[i]], scores[order[i]]});
    }
    return out;
}

bool relevant(const std::string& query_id, const std::vector<std::string>& query_categories,
              const std::string& passage_id, const std::vector<std::string>& passage_categories) {
    if (query_id == passage_id) return true;
    size_t i = 0, j = 0;
    while (i < query_categories.size() && j < passage_categories.size()) {
        if (query_categories[i] == passage_categories[j]) return true;
        if (query_categories[i] < passage_categories[j]) ++i;
        else ++j;
    }
    return false;
}

MetricsReport compute_metrics(
    const std::vector<RankedList>& results,
    const std::function<bool(const std::string&, const std::string&)>& is_relevant,
    const std::function<int(const std::string&)>& total_relevant,
    const std::vector<int>& k_values) {
    if (results.empty()) throw DataError("no ranked lists to score");
    for (const auto& r : results) {
        if (r.hits.empty()) throw DataError("empty ranked list for query " + r.query_id);
    }
    for (int k : k_values) {
        if (k < 1) throw DataError("k must be >= 1");
    }

    MetricsReport report;
    report.k_values = k_values;
    report.query_count = static_cast<int>(results.size());

    std::map<int, double> acc_sum, mrr_sum, map_sum;
    int scored_for_map = 0;
    for (const auto& r : results) {
        const int total_rel = total_relevant(r.query_id);
        if (total_rel == 0) ++report.zero_relevant_queries;
        else ++scored_for_map;

        std::vector<bool> rel(r.hits.size());
        for (size_t i = 0; i < r.hits.size(); ++i) rel[i] = is_relevant(r.query_id, r.hits[i].id);

        for (int k : k_values) {
            const int depth = std::min<int>(k, static_cast<int>(r.hits.size()));
            int first = 0;  // 1-based rank of first relevant within depth, 0 if none
            int hits_seen = 0;
            double ap = 0.0;
            for (int i = 0; i < depth; ++i) {
                if (!rel[i]) continue;
                ++hits_seen;
                if (first == 0) first = i + 1;
                ap += static_cast<double>(hits_seen) / static_cast<double>(i + 1);
            }
            acc_sum[k] += first > 0 ? 1.0 : 0.0;
            mrr_sum[k] += first > 0 ? 1.0 / static_cast<double>(first) : 0.0;
            if (total_rel > 0) {
                map_sum[k] += ap / static_cast<double>(std::min(total_rel, k));
            }
        }
    }

    for (int k : k_values) {
        report.values["acc@" + std::to_string(k)] = acc_sum[k] / report.query_count;
        report.values["mrr@" + std::to_string(k)] = mrr_sum[k] / report.query_count;
        report.values["map@" + std::to_string(k)] =
            scored_for_map > 0 ? map_sum[k] / scored_for_map : 0.0;
    }
    return report;
}

void save_metrics(const MetricsReport& report, const std::string& path) {
    json out;
    out["k_values"] = report.k_values;
    out["query_count"] = report.query_count;
    out["zero_relevant_queries"] = report.zero_relevant_queries;
    out["values"] = report.values;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write metrics: " + path);
    f << out.dump(2) << '\n';
}

void save_ranked_lists(const std::vector<RankedList>& results, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write ranked lists: " + path);
    f << "query_id\trank\tpassage_id\tscore\n";
    char buf[64];
    for (const auto& r : results) {
        for (size_t i = 0; i < r.hits.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.hits[i].score);
            f << r.query_id << '\t' << (i + 1) << '\t' << r.hits[i].id << '\t' << buf << '\n';
        }
    }
}

}  // namespace topicdpr
