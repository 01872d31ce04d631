#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "topicdpr/common.hpp"
#include "topicdpr/retrieval.hpp"

using namespace topicdpr;
using Matrix = Eigen::MatrixXd;

namespace {

Representation rep(const std::string& id, std::initializer_list<double> values,
                   Role role = Role::kPassage) {
    Representation r;
    r.values = Eigen::VectorXd(static_cast<long>(values.size()));
    long i = 0;
    for (double v : values) r.values(i++) = v;
    r.source_id = id;
    r.role = role;
    return r;
}

Document passage(const std::string& id, std::vector<std::string> tokens) {
    Document d;
    d.id = id;
    d.title = {"title"};
    d.abstract_text = std::move(tokens);
    d.categories = {"x"};
    return d;
}

}  // namespace

TEST_CASE("index rows are unit length and inputs are validated") {
    std::vector<Representation> ps = {rep("a", {3.0, 4.0}), rep("b", {0.0, 2.0})};
    std::vector<std::vector<std::string>> cats = {{"x"}, {}};
    DenseIndex index = build_index(ps, cats);
    CHECK(index.size() == 2);
    CHECK(index.dim() == 2);
    CHECK(index.vectors.row(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(index.vectors(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(index.categories[1].empty());

    CHECK_THROWS_AS(build_index({}, {}), DataError);
    CHECK_THROWS_AS(build_index(ps, {{"x"}}), DataError);
    std::vector<Representation> dup = {rep("a", {1.0, 0.0}), rep("a", {0.0, 1.0})};
    CHECK_THROWS_AS(build_index(dup, cats), DataError);
    std::vector<Representation> ragged = {rep("a", {1.0, 0.0}), rep("b", {1.0, 0.0, 0.0})};
    CHECK_THROWS_AS(build_index(ragged, cats), DataError);
    std::vector<Representation> zero = {rep("a", {1.0, 0.0}), rep("b", {0.0, 0.0})};
    CHECK_THROWS_AS(build_index(zero, cats), NumericError);
}

TEST_CASE("search orders by cosine, breaking ties by ascending id") {
    std::vector<Representation> ps = {rep("pc", {2.0, 0.0}), rep("pa", {1.0, 0.0}),
                                      rep("pb", {0.6, 0.8})};
    DenseIndex index = build_index(ps, {{}, {}, {}});
    Representation query = rep("q", {5.0, 0.0}, Role::kQuery);

    RankedList full = search(index, query, 10);
    CHECK(full.query_id == "q");
    REQUIRE(full.hits.size() == 3);  // k capped at index size
    CHECK(full.hits[0].id == "pa");  // same score as pc, lower id first
    CHECK(full.hits[1].id == "pc");
    CHECK(full.hits[2].id == "pb");
    CHECK(full.hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(full.hits[2].score == doctest::Approx(0.6).epsilon(1e-12));

    RankedList top2 = search(index, query, 2);
    CHECK(top2.hits.size() == 2);

    CHECK_THROWS_AS(search(index, query, 0), DataError);
    CHECK_THROWS_AS(search(index, rep("q", {1.0, 0.0, 0.0}), 1), DataError);
    CHECK_THROWS_AS(search(index, rep("q", {0.0, 0.0}), 1), NumericError);
}

TEST_CASE("index files round-trip vectors, categories, and hashes exactly") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Representation> ps;
    std::vector<std::vector<std::string>> cats;
    for (int i = 0; i < 5; ++i) {
        Representation r;
        r.values = Eigen::VectorXd(7);
        for (int j = 0; j < 7; ++j) r.values(j) = dist(rng);
        r.source_id = "p" + std::to_string(i);
        ps.push_back(r);
        cats.push_back(i % 2 == 0 ? std::vector<std::string>{"even", "c" + std::to_string(i)}
                                  : std::vector<std::string>{});
    }
    DenseIndex index = build_index(ps, cats);
    index.checkpoint_hash = 0x1122334455667788ull;
    index.topics_hash = 42;
    index.vocab_hash = 43;

    std::string dir = testutil::temp_dir("index");
    save_index(index, dir + "/x.bin");
    DenseIndex loaded = load_index(dir + "/x.bin");

    CHECK(loaded.ids == index.ids);
    CHECK(loaded.categories == index.categories);
    CHECK(loaded.checkpoint_hash == index.checkpoint_hash);
    CHECK(loaded.topics_hash == index.topics_hash);
    CHECK(loaded.vocab_hash == index.vocab_hash);
    REQUIRE(loaded.vectors.rows() == index.vectors.rows());
    REQUIRE(loaded.vectors.cols() == index.vectors.cols());
    for (long r = 0; r < index.vectors.rows(); ++r) {
        for (long c = 0; c < index.vectors.cols(); ++c) {
            CHECK(loaded.vectors(r, c) == index.vectors(r, c));
        }
    }

    Representation query = rep("q", {0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.7}, Role::kQuery);
    RankedList before = search(index, query, 5);
    RankedList after = search(loaded, query, 5);
    REQUIRE(before.hits.size() == after.hits.size());
    for (size_t i = 0; i < before.hits.size(); ++i) {
        CHECK(before.hits[i].id == after.hits[i].id);
        CHECK(before.hits[i].score == after.hits[i].score);
    }

    testutil::write_file(dir + "/junk.bin", "this is not an index");
    CHECK_THROWS_AS(load_index(dir + "/junk.bin"), DataError);
    CHECK_THROWS_AS(load_index(dir + "/absent.bin"), DataError);
}

TEST_CASE("lexical ranking matches hand-computed scores") {
    std::vector<Document> docs = {passage("d1", {"graph", "colour", "graph"}),
                                  passage("d2", {"graph", "theory"}),
                                  passage("d3", {"colour", "space", "space"})};
    Bm25Index index = build_bm25(docs);
    CHECK(index.avg_length == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
    CHECK(index.doc_frequency.at("graph") == 2);
    CHECK(index.doc_frequency.at("space") == 1);

    RankedList hits = bm25_search(index, {"graph", "space"}, "q", 3);
    REQUIRE(hits.hits.size() == 3);
    CHECK(hits.hits[0].id == "d3");
    CHECK(hits.hits[0].score == doctest::Approx(1.3028373473967083).epsilon(1e-12));
    CHECK(hits.hits[1].id == "d1");
    CHECK(hits.hits[1].score == doctest::Approx(0.6243067075264112).epsilon(1e-12));
    CHECK(hits.hits[2].id == "d2");
    CHECK(hits.hits[2].score == doctest::Approx(0.523548346501579).epsilon(1e-12));

    // query terms act as a multiset: a repeat doubles its contribution
    RankedList once = bm25_search(index, {"theory"}, "q", 3);
    RankedList twice = bm25_search(index, {"theory", "theory"}, "q", 3);
    CHECK(twice.hits[0].score == 2.0 * once.hits[0].score);

    // unknown terms contribute nothing
    RankedList with_junk = bm25_search(index, {"graph", "space", "zzzz"}, "q", 3);
    for (size_t i = 0; i < 3; ++i) CHECK(with_junk.hits[i].score == hits.hits[i].score);

    CHECK_THROWS_AS(build_bm25({}), DataError);
    CHECK_THROWS_AS(bm25_search(index, {"graph"}, "q", 0), DataError);
    std::vector<Document> dup = {passage("d1", {"x1"}), passage("d1", {"x2"})};
    CHECK_THROWS_AS(build_bm25(dup), DataError);
}

TEST_CASE("relevance means shared category or own passage") {
    CHECK(relevant("a", {"x"}, "a", {}));  // own passage, categories ignored
    CHECK(relevant("a", {"m", "x"}, "b", {"x", "z"}));
    CHECK_FALSE(relevant("a", {"m", "x"}, "b", {"n", "z"}));
    CHECK_FALSE(relevant("a", {}, "b", {"x"}));
    CHECK_FALSE(relevant("a", {}, "b", {}));
}

TEST_CASE("metrics match the worked example") {
    std::vector<RankedList> results(3);
    results[0].query_id = "q1";
    results[0].hits = {{"p1", 0.9}, {"p2", 0.8}, {"p3", 0.7}};
    results[1].query_id = "q2";
    results[1].hits = {{"p2", 0.9}, {"p1", 0.8}};
    results[2].query_id = "q3";
    results[2].hits = {{"p1", 0.9}};

    auto is_relevant = [](const std::string& q, const std::string& p) {
        if (q == "q1") return p == "p2" || p == "p3";
        if (q == "q3") return p == "p1";
        return false;
    };
    auto total_relevant = [](const std::string& q) {
        if (q == "q1") return 2;
        if (q == "q3") return 1;
        return 0;
    };

    MetricsReport m = compute_metrics(results, is_relevant, total_relevant, {1, 3});
    CHECK(m.query_count == 3);
    CHECK(m.zero_relevant_queries == 1);
    CHECK(m.values.at("acc@1") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(m.values.at("acc@3") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.values.at("mrr@1") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(m.values.at("mrr@3") == doctest::Approx(0.5).epsilon(1e-15));
    // q2 is excluded from map; q1 contributes (1/2 + 2/3)/min(2,3)
    CHECK(m.values.at("map@1") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.values.at("map@3") == doctest::Approx(19.0 / 24.0).epsilon(1e-12));

    CHECK_THROWS_AS(compute_metrics({}, is_relevant, total_relevant, {1}), DataError);
    CHECK_THROWS_AS(compute_metrics(results, is_relevant, total_relevant, {0}), DataError);
    std::vector<RankedList> hollow(1);
    hollow[0].query_id = "q";
    CHECK_THROWS_AS(compute_metrics(hollow, is_relevant, total_relevant, {1}), DataError);
}

TEST_CASE("metrics agree with a brute-force rescoring of random lists") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    const int num_passages = 30, num_queries = 12, dim = 6;
    std::vector<Representation> ps;
    std::vector<std::vector<std::string>> cats(num_passages);
    for (int i = 0; i < num_passages; ++i) {
        Representation r;
        r.values = Eigen::VectorXd(dim);
        for (int j = 0; j < dim; ++j) r.values(j) = dist(rng);
        r.source_id = "p" + std::to_string(i);
        ps.push_back(r);
    }
    DenseIndex index = build_index(ps, cats);

    auto is_relevant = [](const std::string& q, const std::string& p) {
        int qn = std::stoi(q.substr(1)), pn = std::stoi(p.substr(1));
        return (qn + pn) % 3 == 0;
    };
    auto total_relevant = [&](const std::string& q) {
        int count = 0;
        for (int i = 0; i < num_passages; ++i) {
            if (is_relevant(q, "p" + std::to_string(i))) ++count;
        }
        return count;
    };

    std::vector<RankedList> results;
    for (int i = 0; i < num_queries; ++i) {
        Representation q;
        q.values = Eigen::VectorXd(dim);
        for (int j = 0; j < dim; ++j) q.values(j) = dist(rng);
        q.source_id = "q" + std::to_string(i);
        results.push_back(search(index, q, 10));
    }

    const std::vector<int> ks = {1, 5, 10};
    MetricsReport m = compute_metrics(results, is_relevant, total_relevant, ks);

    for (int k : ks) {
        double acc = 0.0, mrr = 0.0, ap_sum = 0.0;
        int map_queries = 0;
        for (const auto& r : results) {
            int depth = std::min<int>(k, static_cast<int>(r.hits.size()));
            int first = 0, seen = 0;
            double ap = 0.0;
            for (int i = 0; i < depth; ++i) {
                if (!is_relevant(r.query_id, r.hits[i].id)) continue;
                ++seen;
                if (first == 0) first = i + 1;
                ap += static_cast<double>(seen) / (i + 1);
            }
            acc += first > 0 ? 1.0 : 0.0;
            mrr += first > 0 ? 1.0 / first : 0.0;
            int total = total_relevant(r.query_id);
            if (total > 0) {
                ap_sum += ap / std::min(total, k);
                ++map_queries;
            }
        }
        CHECK(m.values.at("acc@" + std::to_string(k)) ==
              doctest::Approx(acc / num_queries).epsilon(1e-12));
        CHECK(m.values.at("mrr@" + std::to_string(k)) ==
              doctest::Approx(mrr / num_queries).epsilon(1e-12));
        CHECK(m.values.at("map@" + std::to_string(k)) ==
              doctest::Approx(ap_sum / map_queries).epsilon(1e-12));
    }
}

TEST_CASE("metric and ranked-list files are written in full precision") {
    std::vector<RankedList> results(1);
    results[0].query_id = "q1";
    results[0].hits = {{"pa", 1.0 / 3.0}, {"pb", 0.1234567890123456789}};

    std::string dir = testutil::temp_dir("reports");
    save_ranked_lists(results, dir + "/r.tsv");
    std::istringstream in(testutil::read_file(dir + "/r.tsv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "query_id\trank\tpassage_id\tscore");
    std::string qid, pid;
    int rank;
    double score;
    in >> qid >> rank >> pid >> score;
    CHECK(qid == "q1");
    CHECK(rank == 1);
    CHECK(pid == "pa");
    CHECK(score == 1.0 / 3.0);  // %.17g survives a parse round trip

    MetricsReport m;
    m.k_values = {1};
    m.values["acc@1"] = 0.25;
    m.values["mrr@1"] = 1.0 / 7.0;
    m.values["map@1"] = 0.5;
    m.query_count = 4;
    m.zero_relevant_queries = 1;
    save_metrics(m, dir + "/m.json");
    auto parsed = nlohmann::json::parse(testutil::read_file(dir + "/m.json"));
    CHECK(parsed["query_count"] == 4);
    CHECK(parsed["zero_relevant_queries"] == 1);
    CHECK(parsed["values"]["mrr@1"].get<double>() == 1.0 / 7.0);
}
