#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicdpr/corpus.hpp"

namespace topicdpr {

struct HldaHyperparams {
    double crp_gamma = 1.0;  // branching concentration
    double alpha = 10.0;     // level-mixture smoothing
    double eta = 0.1;        // topic-word smoothing
};

struct TopicNode {
    int64_t id = 0;
    int level = 0;
    int64_t parent = -1;  // -1 for the root
    std::vector<int64_t> children;  // ascending id
    std::map<int, int64_t> word_counts;  // token id -> count of words assigned here
    int64_t total_words = 0;
    int64_t doc_count = 0;  // documents whose path passes through this node
};

// Collapsed Gibbs state for a nested-CRP topic hierarchy of fixed depth.
// Invariant: word_counts/total_words/doc_count always equal a full recount
// from doc_path and word_levels; counts_consistent() verifies it.
struct HldaState {
    int depth = 3;
    HldaHyperparams hyper;
    uint64_t seed = 7;
    int vocab_size = 0;  // smoothing dimension, includes the unknown slot
    int64_t iterations_done = 0;
    int64_t next_node_id = 1;
    int64_t root_id = 0;
    std::map<int64_t, TopicNode> nodes;  // keyed by id; key order is canonical

    std::vector<std::string> doc_ids;
    std::unordered_map<std::string, int> doc_index;
    std::vector<std::vector<int>> doc_tokens;    // title ++ abstract token ids
    std::vector<std::vector<int64_t>> doc_path;  // [depth] node ids, root first
    std::vector<std::vector<int8_t>> word_levels;

    std::string rng_state;  // serialized engine, captured after every fit/continue
    std::vector<double> ll_history;  // joint log likelihood after each sweep
};

// Point on the simplex over all retained nodes, ascending node id.
struct TopicDistribution {
    std::string doc_id;
    std::vector<int64_t> node_ids;
    std::vector<double> components;
};

struct TopicWordSet {
    int64_t topic_id = -1;
    std::vector<int> words;  // token ids, most probable first; unknown excluded
    std::vector<double> probs;
};

HldaState fit_hlda(const std::vector<Document>& docs, const Vocabulary& vocab,
                   int depth, int iterations, HldaHyperparams hyper, uint64_t seed);

// Runs additional Gibbs sweeps; resuming a loaded checkpoint reproduces the
// sampling an uninterrupted run would have done.
void continue_hlda(HldaState& state, int iterations);

// Per-document mixture: on-path nodes weigh (level word count + alpha), all
// nodes get an epsilon floor, renormalized. Unknown doc id raises DataError.
TopicDistribution doc_topic_distribution(const HldaState& state, const std::string& doc_id,
                                         std::optional<double> alpha_override = std::nullopt,
                                         double epsilon = 1e-6);

// One Gibbs pass with frozen counts for text that was not part of the fit.
// Deterministic in (state.seed, salt).
TopicDistribution fold_in_distribution(const HldaState& state, const std::vector<int>& tokens,
                                       const std::string& salt,
                                       std::optional<double> alpha_override = std::nullopt,
                                       double epsilon = 1e-6);

// Nodes at the given level ordered by descending document count (ties by
// ascending id). Fewer than two nodes raises DataError.
std::vector<int64_t> select_prompt_topics(const HldaState& state, int level = 1);

// Up to `count` positive-count words ranked by (count + eta)/(total + V*eta),
// ties by ascending token id.
TopicWordSet top_words(const HldaState& state, int64_t topic_id, int count);

double joint_log_likelihood(const HldaState& state);
bool counts_consistent(const HldaState& state, std::string* detail = nullptr);

void save_hlda(const HldaState& state, const std::string& path);
HldaState load_hlda(const std::string& path);

}  // namespace topicdpr
