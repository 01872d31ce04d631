#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "topicdpr/common.hpp"
#include "topicdpr/corpus.hpp"
#include "topicdpr/hlda.hpp"

using namespace topicdpr;

namespace {

struct Fixture {
    std::vector<Document> docs;
    Vocabulary vocab;
    HldaState state;
};

Fixture fitted(int iterations, uint64_t seed = 5) {
    SyntheticSpec spec;
    spec.num_topics = 3;
    spec.docs_per_topic = 15;
    spec.vocab_size = 120;
    spec.doc_length = 30;
    spec.multi_category_fraction = 0.0;
    spec.seed = 13;

    Fixture f;
    f.docs = generate_synthetic_corpus(spec);
    f.vocab = build_vocabulary(f.docs, 1);
    f.state = fit_hlda(f.docs, f.vocab, 3, iterations, HldaHyperparams{}, seed);
    return f;
}

double window_mean(const std::vector<double>& xs, size_t begin, size_t count) {
    return std::accumulate(xs.begin() + begin, xs.begin() + begin + count, 0.0) /
           static_cast<double>(count);
}

}  // namespace

TEST_CASE("gibbs fit keeps counts consistent and improves joint likelihood") {
    Fixture f = fitted(60);
    std::string detail;
    CHECK(counts_consistent(f.state, &detail));
    CHECK(detail.empty());
    CHECK(f.state.iterations_done == 60);
    REQUIRE(f.state.ll_history.size() == 60);

    // sweep averages smooth out sampling noise; the chain must move uphill
    CHECK(window_mean(f.state.ll_history, 50, 10) > window_mean(f.state.ll_history, 0, 10));

    double ll = joint_log_likelihood(f.state);
    CHECK(std::isfinite(ll));
    CHECK(ll == f.state.ll_history.back());

    const auto& root = f.state.nodes.at(f.state.root_id);
    CHECK(root.doc_count == static_cast<int64_t>(f.docs.size()));
    for (size_t d = 0; d < f.docs.size(); ++d) {
        REQUIRE(f.state.doc_path[d].size() == 3);
        CHECK(f.state.doc_path[d][0] == f.state.root_id);
        CHECK(f.state.word_levels[d].size() == f.state.doc_tokens[d].size());
    }
}

TEST_CASE("fit rejects degenerate inputs") {
    Fixture f = fitted(1);
    CHECK_THROWS_AS(fit_hlda({}, f.vocab, 3, 10, HldaHyperparams{}, 1), DataError);
    CHECK_THROWS_AS(fit_hlda(f.docs, f.vocab, 1, 10, HldaHyperparams{}, 1), DataError);
    CHECK_THROWS_AS(fit_hlda(f.docs, f.vocab, 3, 0, HldaHyperparams{}, 1), DataError);
    HldaHyperparams bad;
    bad.eta = 0.0;
    CHECK_THROWS_AS(fit_hlda(f.docs, f.vocab, 3, 10, bad, 1), DataError);
}

TEST_CASE("a single document occupies a single path") {
    std::vector<Document> docs(1);
    docs[0].id = "only";
    docs[0].title = {"alpha", "beta"};
    docs[0].abstract_text = {"alpha", "beta", "gamma", "delta", "alpha"};
    docs[0].categories = {"x"};
    Vocabulary vocab = build_vocabulary(docs, 1);

    HldaState state = fit_hlda(docs, vocab, 3, 20, HldaHyperparams{}, 3);
    CHECK(state.nodes.size() == 3);
    CHECK(counts_consistent(state));
    for (const auto& [id, node] : state.nodes) CHECK(node.doc_count == 1);
}

TEST_CASE("document mixture is a strictly positive simplex over all nodes") {
    Fixture f = fitted(40);
    TopicDistribution dist = doc_topic_distribution(f.state, f.docs[0].id);
    REQUIRE(dist.node_ids.size() == f.state.nodes.size());
    REQUIRE(dist.components.size() == dist.node_ids.size());
    CHECK(std::is_sorted(dist.node_ids.begin(), dist.node_ids.end()));

    double total = 0.0;
    for (double c : dist.components) {
        CHECK(c > 0.0);
        total += c;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    // mass concentrates on the document's own path
    const auto& path = f.state.doc_path[f.state.doc_index.at(f.docs[0].id)];
    double on_path = 0.0;
    for (size_t i = 0; i < dist.node_ids.size(); ++i) {
        if (std::find(path.begin(), path.end(), dist.node_ids[i]) != path.end()) {
            on_path += dist.components[i];
        }
    }
    CHECK(on_path > 0.5);

    CHECK_THROWS_AS(doc_topic_distribution(f.state, "no-such-doc"), DataError);
}

TEST_CASE("fold-in is salt-deterministic and leaves the state untouched") {
    Fixture f = fitted(40);
    std::string before;
    counts_consistent(f.state, &before);
    std::vector<int> tokens = f.vocab.encode(f.docs[3].title);
    auto abs_ids = f.vocab.encode(f.docs[3].abstract_text);
    tokens.insert(tokens.end(), abs_ids.begin(), abs_ids.end());

    TopicDistribution a = fold_in_distribution(f.state, tokens, "salt-a");
    TopicDistribution b = fold_in_distribution(f.state, tokens, "salt-a");
    REQUIRE(a.components.size() == b.components.size());
    for (size_t i = 0; i < a.components.size(); ++i) CHECK(a.components[i] == b.components[i]);

    double total = std::accumulate(a.components.begin(), a.components.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(counts_consistent(f.state));
}

TEST_CASE("checkpointed sampling continues exactly where it left off") {
    Fixture f = fitted(30, 17);
    std::string dir = testutil::temp_dir("hlda");
    save_hlda(f.state, dir + "/topics.json");
    HldaState resumed = load_hlda(dir + "/topics.json");
    continue_hlda(resumed, 30);

    HldaState straight = fit_hlda(f.docs, f.vocab, 3, 60, HldaHyperparams{}, 17);

    REQUIRE(resumed.iterations_done == straight.iterations_done);
    REQUIRE(resumed.ll_history.size() == straight.ll_history.size());
    for (size_t i = 0; i < straight.ll_history.size(); ++i) {
        CHECK(resumed.ll_history[i] == straight.ll_history[i]);
    }
    CHECK(resumed.doc_path == straight.doc_path);
    CHECK(resumed.word_levels == straight.word_levels);
    REQUIRE(resumed.nodes.size() == straight.nodes.size());
    for (const auto& [id, node] : straight.nodes) {
        const auto& other = resumed.nodes.at(id);
        CHECK(other.word_counts == node.word_counts);
        CHECK(other.doc_count == node.doc_count);
        CHECK(other.total_words == node.total_words);
    }
    CHECK(joint_log_likelihood(resumed) == joint_log_likelihood(straight));
}

TEST_CASE("save and load round-trip the full sampler state") {
    Fixture f = fitted(25);
    std::string dir = testutil::temp_dir("hlda");
    save_hlda(f.state, dir + "/topics.json");
    HldaState loaded = load_hlda(dir + "/topics.json");

    CHECK(loaded.depth == f.state.depth);
    CHECK(loaded.seed == f.state.seed);
    CHECK(loaded.vocab_size == f.state.vocab_size);
    CHECK(loaded.iterations_done == f.state.iterations_done);
    CHECK(loaded.next_node_id == f.state.next_node_id);
    CHECK(loaded.rng_state == f.state.rng_state);
    CHECK(loaded.doc_ids == f.state.doc_ids);
    CHECK(loaded.doc_tokens == f.state.doc_tokens);
    CHECK(loaded.ll_history == f.state.ll_history);
    CHECK(counts_consistent(loaded));

    CHECK_THROWS_AS(load_hlda(dir + "/absent.json"), DataError);
}

TEST_CASE("prompt topics rank level nodes by population") {
    Fixture f = fitted(60);
    auto ids = select_prompt_topics(f.state, 1);
    REQUIRE(ids.size() >= 2);
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& node = f.state.nodes.at(ids[i]);
        CHECK(node.level == 1);
        if (i > 0) {
            const auto& prev = f.state.nodes.at(ids[i - 1]);
            bool ordered = prev.doc_count > node.doc_count ||
                           (prev.doc_count == node.doc_count && prev.id < node.id);
            CHECK(ordered);
        }
    }
    CHECK_THROWS_AS(select_prompt_topics(f.state, 0), DataError);
    CHECK_THROWS_AS(select_prompt_topics(f.state, 3), DataError);
}

TEST_CASE("prompt topic selection needs at least two branches") {
    HldaState flat;
    flat.depth = 2;
    flat.vocab_size = 5;
    TopicNode root;
    root.id = 0;
    TopicNode child;
    child.id = 1;
    child.level = 1;
    child.parent = 0;
    root.children = {1};
    flat.nodes.emplace(0, root);
    flat.nodes.emplace(1, child);
    CHECK_THROWS_AS(select_prompt_topics(flat, 1), DataError);
}

TEST_CASE("top words rank by smoothed probability with id tie-breaks") {
    HldaState state;
    state.vocab_size = 10;  // unknown slot is id 9
    state.hyper.eta = 0.1;
    TopicNode node;
    node.id = 4;
    node.word_counts = {{7, 5}, {2, 5}, {1, 3}, {9, 100}};
    node.total_words = 113;
    state.nodes.emplace(4, node);

    TopicWordSet set = top_words(state, 4, 10);
    REQUIRE(set.words == std::vector<int>{2, 7, 1});  // unknown slot excluded
    CHECK(set.probs[0] == doctest::Approx((5.0 + 0.1) / (113.0 + 10.0 * 0.1)).epsilon(1e-12));
    CHECK(set.probs[0] == set.probs[1]);
    CHECK(set.probs[2] < set.probs[1]);

    TopicWordSet capped = top_words(state, 4, 2);
    CHECK(capped.words == std::vector<int>{2, 7});

    CHECK_THROWS_AS(top_words(state, 99, 5), DataError);
    CHECK_THROWS_AS(top_words(state, 4, 0), DataError);
}
