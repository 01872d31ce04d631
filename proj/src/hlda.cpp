#include "topicdpr/hlda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "topicdpr/common.hpp"

namespace topicdpr {

using nlohmann::json;

namespace {

// ln Gamma(base + add + smooth) - ln Gamma(base + smooth); the short-add loop
// avoids two lgamma calls in the common case.
double log_gamma_ratio(double base, int64_t add, double smooth) {
    if (add < 8) {
        double acc = 0.0;
        for (int64_t i = 0; i < add; ++i) acc += std::log(base + static_cast<double>(i) + smooth);
        return acc;
    }
    return std::lgamma(base + static_cast<double>(add) + smooth) -
           std::lgamma(base + smooth);
}

size_t sample_from_log_weights(const std::vector<double>& logw, std::mt19937_64& rng) {
    double mx = *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(logw.size());
    double total = 0.0;
    for (size_t i = 0; i < logw.size(); ++i) {
        w[i] = std::exp(logw[i] - mx);
        total += w[i];
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng) * total;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u <= acc) return i;
    }
    return w.size() - 1;
}

// Per-level word multiset of one document, as sorted (token, count) runs.
struct DocLevelCounts {
    std::vector<std::vector<std::pair<int, int64_t>>> words;  // [level]
    std::vector<int64_t> totals;                              // [level]
};

DocLevelCounts doc_level_counts(const HldaState& s, int d) {
    DocLevelCounts out;
    out.words.resize(s.depth);
    out.totals.assign(s.depth, 0);
    std::vector<std::map<int, int64_t>> acc(s.depth);
    const auto& tokens = s.doc_tokens[d];
    const auto& levels = s.word_levels[d];
    for (size_t i = 0; i < tokens.size(); ++i) {
        ++acc[levels[i]][tokens[i]];
        ++out.totals[levels[i]];
    }
    for (int l = 0; l < s.depth; ++l) {
        out.words[l].assign(acc[l].begin(), acc[l].end());
    }
    return out;
}

class Sampler {
public:
    explicit Sampler(HldaState& s) : s_(s) {
        if (s_.rng_state.empty()) {
            rng_.seed(mix_seed(s_.seed, fnv1a64("hlda")));
        } else {
            std::istringstream in(s_.rng_state);
            in >> rng_;
            if (!in) throw DataError("corrupt sampler rng state");
        }
    }

    void persist_rng() {
        std::ostringstream out;
        out << rng_;
        s_.rng_state = out.str();
    }

    void init_document(int d) {
        std::uniform_int_distribution<int> level_pick(0, s_.depth - 1);
        auto& levels = s_.word_levels[d];
        levels.resize(s_.doc_tokens[d].size());
        for (auto& l : levels) l = static_cast<int8_t>(level_pick(rng_));
        DocLevelCounts counts = doc_level_counts(s_, d);
        sample_path(d, counts);
        sample_levels(d);
    }

    void sweep() {
        for (int d = 0; d < static_cast<int>(s_.doc_ids.size()); ++d) {
            DocLevelCounts counts = doc_level_counts(s_, d);
            remove_document(d, counts);
            sample_path(d, counts);
            sample_levels(d);
        }
        s_.ll_history.push_back(joint_log_likelihood(s_));
        ++s_.iterations_done;
    }

private:
    TopicNode& node(int64_t id) { return s_.nodes.at(id); }

    void remove_document(int d, const DocLevelCounts& counts) {
        for (int l = 0; l < s_.depth; ++l) {
            TopicNode& n = node(s_.doc_path[d][l]);
            for (const auto& [w, c] : counts.words[l]) {
                auto it = n.word_counts.find(w);
                it->second -= c;
                if (it->second == 0) n.word_counts.erase(it);
            }
            n.total_words -= counts.totals[l];
            --n.doc_count;
        }
        // prune leaf-to-root; the root survives even when empty
        for (int l = s_.depth - 1; l >= 1; --l) {
            int64_t id = s_.doc_path[d][l];
            TopicNode& n = node(id);
            if (n.doc_count > 0) break;
            TopicNode& p = node(n.parent);
            p.children.erase(std::find(p.children.begin(), p.children.end(), id));
            s_.nodes.erase(id);
        }
    }

    // Likelihood of the document's level-l words joining a node with the
    // given counts (Dirichlet-multinomial ratio under eta smoothing).
    double level_log_likelihood(const TopicNode* n, const DocLevelCounts& counts, int l) const {
        const double eta = s_.hyper.eta;
        const double veta = static_cast<double>(s_.vocab_size) * eta;
        double acc = 0.0;
        int64_t base_total = 0;
        if (n != nullptr) base_total = n->total_words;
        for (const auto& [w, c] : counts.words[l]) {
            double base = 0.0;
            if (n != nullptr) {
                auto it = n->word_counts.find(w);
                if (it != n->word_counts.end()) base = static_cast<double>(it->second);
            }
            acc += log_gamma_ratio(base, c, eta);
        }
        acc -= log_gamma_ratio(static_cast<double>(base_total), counts.totals[l], veta);
        return acc;
    }

    // Every retained node is a candidate attachment point: the path follows
    // its ancestors and opens fresh nodes below it down to depth-1.
    void sample_path(int d, const DocLevelCounts& counts) {
        const double gamma = s_.hyper.crp_gamma;

        std::vector<double> empty_tail(s_.depth + 1, 0.0);
        for (int l = s_.depth - 1; l >= 0; --l) {
            empty_tail[l] = empty_tail[l + 1] + level_log_likelihood(nullptr, counts, l);
        }

        std::vector<int64_t> ids;
        std::vector<double> logw;
        ids.reserve(s_.nodes.size());
        logw.reserve(s_.nodes.size());

        // DFS accumulating prior and likelihood along the chain from the root.
        struct Frame { int64_t id; double prior; double lik; };
        std::vector<Frame> stack;
        {
            const TopicNode& root = s_.nodes.at(s_.root_id);
            stack.push_back(Frame{root.id, 0.0, level_log_likelihood(&root, counts, 0)});
        }
        while (!stack.empty()) {
            Frame f = stack.back();
            stack.pop_back();
            const TopicNode& n = s_.nodes.at(f.id);
            double cand = f.prior + f.lik + empty_tail[n.level + 1];
            if (n.level < s_.depth - 1) {
                cand += std::log(gamma / (static_cast<double>(n.doc_count) + gamma));
            }
            ids.push_back(f.id);
            logw.push_back(cand);
            // push children in reverse so they pop in ascending-id order
            for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
                const TopicNode& c = s_.nodes.at(*it);
                double prior = f.prior + std::log(static_cast<double>(c.doc_count) /
                                                  (static_cast<double>(n.doc_count) + gamma));
                double lik = f.lik + level_log_likelihood(&c, counts, c.level);
                stack.push_back(Frame{c.id, prior, lik});
            }
        }

        size_t pick = sample_from_log_weights(logw, rng_);
        attach_document(d, ids[pick], counts);
    }

    void attach_document(int d, int64_t attach_id, const DocLevelCounts& counts) {
        std::vector<int64_t> path(s_.depth, -1);
        int64_t cur = attach_id;
        for (int l = node(attach_id).level; l >= 0; --l) {
            path[l] = cur;
            cur = node(cur).parent;
        }
        for (int l = node(attach_id).level + 1; l < s_.depth; ++l) {
            TopicNode fresh;
            fresh.id = s_.next_node_id++;
            fresh.level = l;
            fresh.parent = path[l - 1];
            node(path[l - 1]).children.push_back(fresh.id);  // new id is the maximum, order kept
            path[l] = fresh.id;
            s_.nodes.emplace(fresh.id, std::move(fresh));
        }
        for (int l = 0; l < s_.depth; ++l) {
            TopicNode& n = node(path[l]);
            for (const auto& [w, c] : counts.words[l]) n.word_counts[w] += c;
            n.total_words += counts.totals[l];
            ++n.doc_count;
        }
        s_.doc_path[d] = std::move(path);
    }

    void sample_levels(int d) {
        const double alpha = s_.hyper.alpha;
        const double eta = s_.hyper.eta;
        const double veta = static_cast<double>(s_.vocab_size) * eta;
        const auto& tokens = s_.doc_tokens[d];
        auto& levels = s_.word_levels[d];
        const auto& path = s_.doc_path[d];

        std::vector<int64_t> m(s_.depth, 0);
        for (auto l : levels) ++m[l];

        std::vector<double> prob(s_.depth);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (size_t i = 0; i < tokens.size(); ++i) {
            const int w = tokens[i];
            const int old = levels[i];
            {
                TopicNode& n = node(path[old]);
                auto it = n.word_counts.find(w);
                it->second -= 1;
                if (it->second == 0) n.word_counts.erase(it);
                n.total_words -= 1;
                --m[old];
            }
            double total = 0.0;
            for (int l = 0; l < s_.depth; ++l) {
                const TopicNode& n = node(path[l]);
                auto it = n.word_counts.find(w);
                double cw = it == n.word_counts.end() ? 0.0 : static_cast<double>(it->second);
                prob[l] = (static_cast<double>(m[l]) + alpha) * (cw + eta) /
                          (static_cast<double>(n.total_words) + veta);
                total += prob[l];
            }
            double u = unit(rng_) * total;
            int pick = s_.depth - 1;
            double acc = 0.0;
            for (int l = 0; l < s_.depth; ++l) {
                acc += prob[l];
                if (u <= acc) {
                    pick = l;
                    break;
                }
            }
            {
                TopicNode& n = node(path[pick]);
                n.word_counts[w] += 1;
                n.total_words += 1;
                ++m[pick];
                levels[i] = static_cast<int8_t>(pick);
            }
        }
    }

    HldaState& s_;
    std::mt19937_64 rng_;
};

}  // namespace

HldaState fit_hlda(const std::vector<Document>& docs, const Vocabulary& vocab,
                   int depth, int iterations, HldaHyperparams hyper, uint64_t seed) {
    if (docs.empty()) throw DataError("cannot fit a topic hierarchy on an empty corpus");
    if (depth < 2) throw DataError("hierarchy depth must be >= 2");
    if (iterations < 1) throw DataError("iterations must be >= 1");
    if (!(hyper.crp_gamma > 0.0 && hyper.alpha > 0.0 && hyper.eta > 0.0)) {
        throw DataError("hyperparameters must be positive");
    }

    HldaState s;
    s.depth = depth;
    s.hyper = hyper;
    s.seed = seed;
    s.vocab_size = vocab.size_with_unknown();

    TopicNode root;
    root.id = 0;
    root.level = 0;
    root.parent = -1;
    s.nodes.emplace(0, std::move(root));
    s.root_id = 0;
    s.next_node_id = 1;

    s.doc_ids.reserve(docs.size());
    s.doc_tokens.reserve(docs.size());
    for (const auto& doc : docs) {
        if (s.doc_index.count(doc.id)) throw DataError("duplicate document id: " + doc.id);
        std::vector<int> tokens = vocab.encode(doc.title);
        std::vector<int> abs_ids = vocab.encode(doc.abstract_text);
        tokens.insert(tokens.end(), abs_ids.begin(), abs_ids.end());
        if (tokens.empty()) throw DataError("document " + doc.id + " has no tokens");
        s.doc_index.emplace(doc.id, static_cast<int>(s.doc_ids.size()));
        s.doc_ids.push_back(doc.id);
        s.doc_tokens.push_back(std::move(tokens));
    }
    s.doc_path.assign(s.doc_ids.size(), {});
    s.word_levels.assign(s.doc_ids.size(), {});

    Sampler sampler(s);
    for (int d = 0; d < static_cast<int>(s.doc_ids.size()); ++d) sampler.init_document(d);
    for (int it = 0; it < iterations; ++it) sampler.sweep();
    sampler.persist_rng();
    return s;
}

void continue_hlda(HldaState& state, int iterations) {
    if (iterations < 1) throw DataError("iterations must be >= 1");
    if (state.doc_ids.empty()) throw DataError("state holds no documents");
    Sampler sampler(state);
    for (int it = 0; it < iterations; ++it) sampler.sweep();
    sampler.persist_rng();
}

namespace {

TopicDistribution distribution_from_assignment(const HldaState& s, const std::string& doc_id,
                                               const std::vector<int64_t>& path,
                                               const std::vector<int64_t>& level_counts,
                                               double alpha, double epsilon) {
    TopicDistribution dist;
    dist.doc_id = doc_id;
    dist.node_ids.reserve(s.nodes.size());
    dist.components.reserve(s.nodes.size());
    for (const auto& [id, n] : s.nodes) {
        double c = epsilon;
        if (n.level < static_cast<int>(path.size()) && path[n.level] == id) {
            c += static_cast<double>(level_counts[n.level]) + alpha;
        }
        dist.node_ids.push_back(id);
        dist.components.push_back(c);
    }
    double total = 0.0;
    for (double c : dist.components) total += c;
    if (total <= 0.0) {
        throw NumericError("degenerate topic distribution for " + doc_id +
                           " (all components zero)");
    }
    for (double& c : dist.components) c /= total;
    return dist;
}

}  // namespace

TopicDistribution doc_topic_distribution(const HldaState& state, const std::string& doc_id,
                                         std::optional<double> alpha_override, double epsilon) {
    auto it = state.doc_index.find(doc_id);
    if (it == state.doc_index.end()) throw DataError("unknown document id: " + doc_id);
    const int d = it->second;
    std::vector<int64_t> level_counts(state.depth, 0);
    for (auto l : state.word_levels[d]) ++level_counts[l];
    return distribution_from_assignment(state, doc_id, state.doc_path[d], level_counts,
                                        alpha_override.value_or(state.hyper.alpha), epsilon);
}

TopicDistribution fold_in_distribution(const HldaState& state, const std::vector<int>& tokens,
                                       const std::string& salt,
                                       std::optional<double> alpha_override, double epsilon) {
    if (tokens.empty()) throw DataError("cannot fold in an empty token sequence");
    const double gamma = state.hyper.crp_gamma;
    const double alpha = state.hyper.alpha;
    const double eta = state.hyper.eta;
    const double veta = static_cast<double>(state.vocab_size) * eta;

    std::mt19937_64 rng(mix_seed(state.seed, fnv1a64(salt), fnv1a64("fold")));
    std::uniform_int_distribution<int> level_pick(0, state.depth - 1);
    std::vector<int8_t> levels(tokens.size());
    for (auto& l : levels) l = static_cast<int8_t>(level_pick(rng));

    std::vector<std::map<int, int64_t>> acc(state.depth);
    std::vector<int64_t> level_counts(state.depth, 0);
    for (size_t i = 0; i < tokens.size(); ++i) {
        ++acc[levels[i]][tokens[i]];
        ++level_counts[levels[i]];
    }

    // Existing complete paths only: the tree is frozen.
    std::vector<std::vector<int64_t>> paths;
    for (const auto& [id, n] : state.nodes) {
        if (n.level != state.depth - 1) continue;
        std::vector<int64_t> path(state.depth);
        int64_t cur = id;
        for (int l = state.depth - 1; l >= 0; --l) {
            path[l] = cur;
            cur = state.nodes.at(cur).parent;
        }
        paths.push_back(std::move(path));
    }
    if (paths.empty()) throw DataError("topic hierarchy has no complete path to fold into");

    std::vector<double> logw(paths.size(), 0.0);
    for (size_t p = 0; p < paths.size(); ++p) {
        for (int l = 0; l < state.depth; ++l) {
            const TopicNode& n = state.nodes.at(paths[p][l]);
            if (l > 0) {
                const TopicNode& par = state.nodes.at(n.parent);
                logw[p] += std::log(static_cast<double>(n.doc_count) /
                                    (static_cast<double>(par.doc_count) + gamma));
            }
            for (const auto& [w, c] : acc[l]) {
                auto wit = n.word_counts.find(w);
                double base = wit == n.word_counts.end() ? 0.0 : static_cast<double>(wit->second);
                logw[p] += log_gamma_ratio(base, c, eta);
            }
            logw[p] -= log_gamma_ratio(static_cast<double>(n.total_words), level_counts[l], veta);
        }
    }
    const auto& path = paths[sample_from_log_weights(logw, rng)];

    // One level pass; node counts stay frozen, only the doc-local mixture moves.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> prob(state.depth);
    for (size_t i = 0; i < tokens.size(); ++i) {
        --level_counts[levels[i]];
        double total = 0.0;
        for (int l = 0; l < state.depth; ++l) {
            const TopicNode& n = state.nodes.at(path[l]);
            auto wit = n.word_counts.find(tokens[i]);
            double cw = wit == n.word_counts.end() ? 0.0 : static_cast<double>(wit->second);
            prob[l] = (static_cast<double>(level_counts[l]) + alpha) * (cw + eta) /
                      (static_cast<double>(n.total_words) + veta);
            total += prob[l];
        }
        double u = unit(rng) * total;
        int pick = state.depth - 1;
        double run = 0.0;
        for (int l = 0; l < state.depth; ++l) {
            run += prob[l];
            if (u <= run) {
                pick = l;
                break;
            }
        }
        levels[i] = static_cast<int8_t>(pick);
        ++level_counts[pick];
    }

    return distribution_from_assignment(state, "", path, level_counts,
                                        alpha_override.value_or(alpha), epsilon);
}

std::vector<int64_t> select_prompt_topics(const HldaState& state, int level) {
    if (level < 1 || level >= state.depth) throw DataError("prompt topic level out of range");
    std::vector<const TopicNode*> at_level;
    for (const auto& [id, n] : state.nodes) {
        if (n.level == level) at_level.push_back(&n);
    }
    std::sort(at_level.begin(), at_level.end(), [](const TopicNode* a, const TopicNode* b) {
        if (a->doc_count != b->doc_count) return a->doc_count > b->doc_count;
        return a->id < b->id;
    });
    if (at_level.size() < 2) {
        throw DataError("fewer than two topics at level " + std::to_string(level) +
                        "; the hierarchy is too flat for topic prompts");
    }
    std::vector<int64_t> ids;
    ids.reserve(at_level.size());
    for (const auto* n : at_level) ids.push_back(n->id);
    return ids;
}

TopicWordSet top_words(const HldaState& state, int64_t topic_id, int count) {
    auto it = state.nodes.find(topic_id);
    if (it == state.nodes.end()) throw DataError("unknown topic id: " + std::to_string(topic_id));
    if (count < 1) throw DataError("word count must be >= 1");
    const TopicNode& n = it->second;
    const double eta = state.hyper.eta;
    const double denom = static_cast<double>(n.total_words) +
                         static_cast<double>(state.vocab_size) * eta;
    const int unknown = state.vocab_size - 1;

    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(n.word_counts.size());
    for (const auto& [w, c] : n.word_counts) {
        if (w == unknown) continue;
        ranked.emplace_back((static_cast<double>(c) + eta) / denom, w);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (static_cast<int>(ranked.size()) > count) ranked.resize(count);

    TopicWordSet set;
    set.topic_id = topic_id;
    for (const auto& [p, w] : ranked) {
        set.words.push_back(w);
        set.probs.push_back(p);
    }
    return set;
}

double joint_log_likelihood(const HldaState& state) {
    const double eta = state.hyper.eta;
    const double gamma = state.hyper.crp_gamma;
    const double alpha = state.hyper.alpha;
    const double veta = static_cast<double>(state.vocab_size) * eta;

    double ll = 0.0;
    for (const auto& [id, n] : state.nodes) {
        ll += std::lgamma(veta) - std::lgamma(static_cast<double>(n.total_words) + veta);
        for (const auto& [w, c] : n.word_counts) {
            ll += std::lgamma(static_cast<double>(c) + eta) - std::lgamma(eta);
        }
        if (!n.children.empty()) {
            ll += std::lgamma(gamma) - std::lgamma(static_cast<double>(n.doc_count) + gamma);
            ll += static_cast<double>(n.children.size()) * std::log(gamma);
            for (int64_t cid : n.children) {
                ll += std::lgamma(static_cast<double>(state.nodes.at(cid).doc_count));
            }
        }
    }
    const double halpha = static_cast<double>(state.depth) * alpha;
    for (size_t d = 0; d < state.doc_ids.size(); ++d) {
        std::vector<int64_t> m(state.depth, 0);
        for (auto l : state.word_levels[d]) ++m[l];
        ll += std::lgamma(halpha) -
              std::lgamma(static_cast<double>(state.doc_tokens[d].size()) + halpha);
        for (int l = 0; l < state.depth; ++l) {
            ll += std::lgamma(static_cast<double>(m[l]) + alpha) - std::lgamma(alpha);
        }
    }
    return ll;
}

bool counts_consistent(const HldaState& state, std::string* detail) {
    auto fail = [&](const std::string& why) {
        if (detail != nullptr) *detail = why;
        return false;
    };

    std::map<int64_t, TopicNode> fresh;
    for (const auto& [id, n] : state.nodes) {
        TopicNode copy;
        copy.id = n.id;
        copy.level = n.level;
        copy.parent = n.parent;
        copy.children = n.children;
        fresh.emplace(id, std::move(copy));
    }
    for (size_t d = 0; d < state.doc_ids.size(); ++d) {
        if (static_cast<int>(state.doc_path[d].size()) != state.depth) {
            return fail("document " + state.doc_ids[d] + " has a path of wrong depth");
        }
        if (state.word_levels[d].size() != state.doc_tokens[d].size()) {
            return fail("document " + state.doc_ids[d] + " has misaligned level assignments");
        }
        for (int l = 0; l < state.depth; ++l) {
            auto it = fresh.find(state.doc_path[d][l]);
            if (it == fresh.end()) {
                return fail("document " + state.doc_ids[d] + " references a pruned node");
            }
            if (it->second.level != l) {
                return fail("document " + state.doc_ids[d] + " path level mismatch");
            }
            ++it->second.doc_count;
        }
        for (size_t i = 0; i < state.doc_tokens[d].size(); ++i) {
            int l = state.word_levels[d][i];
            if (l < 0 || l >= state.depth) {
                return fail("document " + state.doc_ids[d] + " has a level out of range");
            }
            TopicNode& n = fresh.at(state.doc_path[d][l]);
            ++n.word_counts[state.doc_tokens[d][i]];
            ++n.total_words;
        }
    }
    for (const auto& [id, n] : state.nodes) {
        const TopicNode& r = fresh.at(id);
        if (n.doc_count != r.doc_count) {
            return fail("node " + std::to_string(id) + " doc count drifted");
        }
        if (n.total_words != r.total_words) {
            return fail("node " + std::to_string(id) + " word total drifted");
        }
        if (n.word_counts != r.word_counts) {
            return fail("node " + std::to_string(id) + " word counts drifted");
        }
        if (id != state.root_id) {
            auto pit = state.nodes.find(n.parent);
            if (pit == state.nodes.end()) {
                return fail("node " + std::to_string(id) + " has a missing parent");
            }
            const auto& ch = pit->second.children;
            if (std::find(ch.begin(), ch.end(), id) == ch.end()) {
                return fail("node " + std::to_string(id) + " missing from parent's children");
            }
        }
        if (n.doc_count == 0 && id != state.root_id) {
            return fail("node " + std::to_string(id) + " is empty but retained");
        }
    }
    return true;
}

void save_hlda(const HldaState& state, const std::string& path) {
    json out;
    out["format"] = "topicdpr-hlda-1";
    out["depth"] = state.depth;
    out["seed"] = state.seed;
    out["vocab_size"] = state.vocab_size;
    out["iterations_done"] = state.iterations_done;
    out["next_node_id"] = state.next_node_id;
    out["root_id"] = state.root_id;
    out["hyper"] = {{"crp_gamma", state.hyper.crp_gamma},
                    {"alpha", state.hyper.alpha},
                    {"eta", state.hyper.eta}};
    json nodes = json::array();
    for (const auto& [id, n] : state.nodes) {
        json words = json::array();
        for (const auto& [w, c] : n.word_counts) words.push_back({w, c});
        nodes.push_back({{"id", n.id},
                         {"level", n.level},
                         {"parent", n.parent},
                         {"children", n.children},
                         {"doc_count", n.doc_count},
                         {"words", std::move(words)}});
    }
    out["nodes"] = std::move(nodes);
    json docs = json::array();
    for (size_t d = 0; d < state.doc_ids.size(); ++d) {
        docs.push_back({{"id", state.doc_ids[d]},
                        {"tokens", state.doc_tokens[d]},
                        {"path", state.doc_path[d]},
                        {"levels", state.word_levels[d]}});
    }
    out["docs"] = std::move(docs);
    out["rng_state"] = state.rng_state;
    out["ll_history"] = state.ll_history;

    std::ofstream f(path);
    if (!f) throw DataError("cannot write topic checkpoint: " + path);
    f << out.dump() << '\n';
}

HldaState load_hlda(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open topic checkpoint: " + path);
    json in;
    try {
        f >> in;
    } catch (const json::exception& e) {
        throw DataError("corrupt topic checkpoint " + path + ": " + e.what());
    }
    if (in.value("format", "") != "topicdpr-hlda-1") {
        throw DataError("unrecognized topic checkpoint format in " + path);
    }

    HldaState s;
    try {
        s.depth = in.at("depth").get<int>();
        s.seed = in.at("seed").get<uint64_t>();
        s.vocab_size = in.at("vocab_size").get<int>();
        s.iterations_done = in.at("iterations_done").get<int64_t>();
        s.next_node_id = in.at("next_node_id").get<int64_t>();
        s.root_id = in.at("root_id").get<int64_t>();
        s.hyper.crp_gamma = in.at("hyper").at("crp_gamma").get<double>();
        s.hyper.alpha = in.at("hyper").at("alpha").get<double>();
        s.hyper.eta = in.at("hyper").at("eta").get<double>();
        for (const auto& jn : in.at("nodes")) {
            TopicNode n;
            n.id = jn.at("id").get<int64_t>();
            n.level = jn.at("level").get<int>();
            n.parent = jn.at("parent").get<int64_t>();
            n.children = jn.at("children").get<std::vector<int64_t>>();
            n.doc_count = jn.at("doc_count").get<int64_t>();
            for (const auto& wc : jn.at("words")) {
                int64_t c = wc.at(1).get<int64_t>();
                n.word_counts[wc.at(0).get<int>()] = c;
                n.total_words += c;
            }
            s.nodes.emplace(n.id, std::move(n));
        }
        for (const auto& jd : in.at("docs")) {
            s.doc_index.emplace(jd.at("id").get<std::string>(),
                                static_cast<int>(s.doc_ids.size()));
            s.doc_ids.push_back(jd.at("id").get<std::string>());
            s.doc_tokens.push_back(jd.at("tokens").get<std::vector<int>>());
            s.doc_path.push_back(jd.at("path").get<std::vector<int64_t>>());
            s.word_levels.push_back(jd.at("levels").get<std::vector<int8_t>>());
        }
        s.rng_state = in.at("rng_state").get<std::string>();
        s.ll_history = in.at("ll_history").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError("corrupt topic checkpoint " + path + ": " + e.what());
    }

    std::string why;
    if (!counts_consistent(s, &why)) {
        throw DataError("topic checkpoint fails consistency: " + why);
    }
    return s;
}

}  // namespace topicdpr
