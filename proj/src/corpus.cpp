#include "topicdpr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "topicdpr/common.hpp"

namespace topicdpr {

using nlohmann::json;

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unknown_id() : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
}

uint64_t Vocabulary::content_hash() const {
    std::string joined;
    for (const auto& t : id_to_token) {
        joined += t;
        joined += '\n';
    }
    return fnv1a64(joined);
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            if (cur.size() >= 2) out.push_back(cur);
            cur.clear();
        }
    }
    if (cur.size() >= 2) out.push_back(cur);
    return out;
}

namespace {

std::vector<std::string> normalized_categories(std::vector<std::string> cats) {
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    return cats;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string s;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

}  // namespace

std::vector<Document> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);

    std::vector<Document> docs;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    int ineligible = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("title") ||
            !rec.contains("abstract") || !rec.contains("categories")) {
            throw DataError("corpus line " + std::to_string(line_no) +
                            ": expected fields id, title, abstract, categories");
        }
        Document doc;
        try {
            doc.id = rec.at("id").get<std::string>();
            doc.title = tokenize(rec.at("title").get<std::string>());
            doc.abstract_text = tokenize(rec.at("abstract").get<std::string>());
            doc.categories = normalized_categories(rec.at("categories").get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen_ids.insert(doc.id).second) {
            throw DataError("duplicate document id: " + doc.id);
        }
        if (doc.title.empty() || doc.abstract_text.empty()) {
            throw DataError("document " + doc.id + ": title or abstract tokenizes to nothing");
        }
        if (doc.categories.empty()) {
            doc.eligible = false;
            ++ineligible;
        }
        docs.push_back(std::move(doc));
    }
    if (docs.empty()) throw DataError("corpus file has no documents: " + path);
    if (ineligible > 0) {
        log_info(std::to_string(ineligible) + " documents have no categories; flagged ineligible for training");
    }
    return docs;
}

void save_corpus(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const auto& doc : docs) {
        json rec;
        rec["id"] = doc.id;
        rec["title"] = join_tokens(doc.title);
        rec["abstract"] = join_tokens(doc.abstract_text);
        rec["categories"] = doc.categories;
        out << rec.dump() << '\n';
    }
}

Vocabulary build_vocabulary(const std::vector<Document>& docs, int min_count) {
    if (min_count < 1) throw DataError("min_count must be >= 1");
    std::map<std::string, int64_t> counts;
    for (const auto& doc : docs) {
        for (const auto& t : doc.title) ++counts[t];
        for (const auto& t : doc.abstract_text) ++counts[t];
    }
    std::vector<std::pair<std::string, int64_t>> retained;
    for (const auto& [tok, n] : counts) {
        if (n >= min_count) retained.emplace_back(tok, n);
    }
    std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    vocab.id_to_token.reserve(retained.size());
    vocab.frequencies.reserve(retained.size());
    for (size_t i = 0; i < retained.size(); ++i) {
        vocab.id_to_token.push_back(retained[i].first);
        vocab.frequencies.push_back(retained[i].second);
        vocab.token_to_id.emplace(retained[i].first, static_cast<int>(i));
    }
    return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    json out;
    out["format"] = "topicdpr-vocab-1";
    json tokens = json::array();
    for (size_t i = 0; i < vocab.id_to_token.size(); ++i) {
        tokens.push_back({vocab.id_to_token[i], vocab.frequencies[i]});
    }
    out["tokens"] = std::move(tokens);
    std::ofstream f(path);
    if (!f) throw DataError("cannot write vocabulary: " + path);
    f << out.dump() << '\n';
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open vocabulary: " + path);
    json in;
    try {
        f >> in;
    } catch (const json::exception& e) {
        throw DataError("corrupt vocabulary " + path + ": " + e.what());
    }
    if (in.value("format", "") != "topicdpr-vocab-1") {
        throw DataError("unrecognized vocabulary format in " + path);
    }
    Vocabulary vocab;
    try {
        for (const auto& t : in.at("tokens")) {
            vocab.token_to_id.emplace(t.at(0).get<std::string>(),
                                      static_cast<int>(vocab.id_to_token.size()));
            vocab.id_to_token.push_back(t.at(0).get<std::string>());
            vocab.frequencies.push_back(t.at(1).get<int64_t>());
        }
    } catch (const json::exception& e) {
        throw DataError("malformed vocabulary " + path + ": " + e.what());
    }
    return vocab;
}

CorpusSplit split_corpus(const std::vector<Document>& docs,
                         const std::array<double, 3>& ratios, uint64_t seed) {
    double total = ratios[0] + ratios[1] + ratios[2];
    if (!(total > 0.999 && total < 1.001)) throw DataError("split ratios must sum to 1");
    const size_t n = docs.size();

    // floor-then-largest-remainder sizing
    std::array<size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = ratios[i] * static_cast<double>(n);
        sizes[i] = static_cast<size_t>(exact);
        remainders[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
        return a < b;
    });
    for (size_t left = n - assigned, i = 0; left > 0; --left, ++i) {
        ++sizes[order[i % 3]];
    }
    if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
        throw DataError("split would leave an empty part (" + std::to_string(n) + " docs)");
    }

    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(mix_seed(seed, fnv1a64("split")));
    std::shuffle(perm.begin(), perm.end(), rng);

    CorpusSplit split;
    size_t pos = 0;
    auto take = [&](std::vector<Document>& dst, size_t count) {
        dst.reserve(count);
        for (size_t i = 0; i < count; ++i) dst.push_back(docs[perm[pos++]]);
    };
    take(split.train, sizes[0]);
    take(split.dev, sizes[1]);
    take(split.test, sizes[2]);
    return split;
}

std::vector<Document> prepend_topic_words(
    const std::vector<Document>& docs,
    const std::map<std::string, std::vector<std::string>>& words_per_doc,
    PrependMode mode, const Vocabulary* vocab, int word_count, uint64_t seed) {
    if (word_count < 0) throw DataError("word_count must be >= 0");
    if (mode == PrependMode::kRandom && word_count > 0 &&
        (vocab == nullptr || vocab->id_to_token.empty())) {
        throw DataError("random prepend mode needs a non-empty vocabulary");
    }

    std::vector<Document> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        std::vector<std::string> words;
        if (word_count > 0) {
            if (mode == PrependMode::kTopic) {
                auto it = words_per_doc.find(doc.id);
                if (it == words_per_doc.end()) {
                    throw DataError("no topic words assigned to document " + doc.id);
                }
                words = it->second;
                if (static_cast<int>(words.size()) > word_count) words.resize(word_count);
            } else {
                std::mt19937_64 rng(mix_seed(seed, fnv1a64(doc.id)));
                std::uniform_int_distribution<size_t> pick(0, vocab->id_to_token.size() - 1);
                for (int i = 0; i < word_count; ++i) words.push_back(vocab->id_to_token[pick(rng)]);
            }
        }
        Document copy = doc;
        copy.title.insert(copy.title.begin(), words.begin(), words.end());
        copy.abstract_text.insert(copy.abstract_text.begin(), words.begin(), words.end());
        out.push_back(std::move(copy));
    }
    return out;
}

std::vector<Document> generate_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.num_topics < 1) throw DataError("num_topics must be >= 1");
    if (spec.docs_per_topic < 1) throw DataError("docs_per_topic must be >= 1");
    if (spec.vocab_size < spec.num_topics * 20) {
        throw DataError("vocab_size must be at least 20 tokens per topic");
    }
    if (spec.doc_length < 5) throw DataError("doc_length must be >= 5");
    if (spec.overlap < 0.0 || spec.overlap >= 1.0) throw DataError("overlap must lie in [0, 1)");
    if (spec.multi_category_fraction < 0.0 || spec.multi_category_fraction > 1.0) {
        throw DataError("multi_category_fraction must lie in [0, 1]");
    }

    const int shared_count = static_cast<int>(spec.overlap * spec.vocab_size);
    const int block_size = (spec.vocab_size - shared_count) / spec.num_topics;
    if (block_size < 4) throw DataError("overlap leaves topic blocks too small");

    auto token_name = [](int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "tok%05d", i);
        return std::string(buf);
    };

    std::mt19937_64 rng(mix_seed(spec.seed, fnv1a64("synth")));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int title_length = std::max(3, spec.doc_length / 5);
    std::vector<Document> docs;
    docs.reserve(static_cast<size_t>(spec.num_topics) * spec.docs_per_topic);

    for (int t = 0; t < spec.num_topics; ++t) {
        const int block_begin = shared_count + t * block_size;
        // Paraphrase halves: titles draw from [begin, mid), abstracts from [mid, end).
        const int mid = block_begin + block_size / 2;
        for (int d = 0; d < spec.docs_per_topic; ++d) {
            auto draw = [&](bool for_title) {
                if (shared_count > 0 && unit(rng) < spec.overlap) {
                    std::uniform_int_distribution<int> pick(0, shared_count - 1);
                    return token_name(pick(rng));
                }
                int lo = block_begin;
                int hi = block_begin + block_size - 1;
                if (spec.paraphrase) {
                    if (for_title) hi = mid - 1;
                    else lo = mid;
                }
                std::uniform_int_distribution<int> pick(lo, hi);
                return token_name(pick(rng));
            };

            Document doc;
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "syn-t%d-d%04d", t, d);
            doc.id = idbuf;
            for (int i = 0; i < title_length; ++i) doc.title.push_back(draw(true));
            for (int i = 0; i < spec.doc_length; ++i) doc.abstract_text.push_back(draw(false));
            doc.categories.push_back("topic" + std::to_string(t));
            if (spec.num_topics > 1 && unit(rng) < spec.multi_category_fraction) {
                std::uniform_int_distribution<int> other(0, spec.num_topics - 2);
                int o = other(rng);
                if (o >= t) ++o;
                doc.categories.push_back("topic" + std::to_string(o));
            }
            doc.categories = normalized_categories(std::move(doc.categories));
            docs.push_back(std::move(doc));
        }
    }
    return docs;
}

int planted_topic_of(const Document& doc) {
    if (doc.id.rfind("syn-t", 0) != 0) throw DataError("not a synthetic document id: " + doc.id);
    size_t dash = doc.id.find('-', 5);
    if (dash == std::string::npos) throw DataError("not a synthetic document id: " + doc.id);
    return std::stoi(doc.id.substr(5, dash - 5));
}

}  // namespace topicdpr
