#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace topicdpr {

// One titled passage. Token sequences are stored as the lowercased word
// strings the tokenizer produced; ids are assigned through a Vocabulary at
// the point of use, so serialization round-trips exactly.
struct Document {
    std::string id;
    std::vector<std::string> title;
    std::vector<std::string> abstract_text;
    std::vector<std::string> categories;  // sorted, deduplicated
    bool eligible = true;                 // false when categories is empty
};

struct Vocabulary {
    std::vector<std::string> id_to_token;               // ids [0, retained)
    std::vector<int64_t> frequencies;                   // aligned with id_to_token
    std::unordered_map<std::string, int> token_to_id;

    int unknown_id() const { return static_cast<int>(id_to_token.size()); }
    // Table size for anything indexed by token id (retained tokens + unknown).
    int size_with_unknown() const { return static_cast<int>(id_to_token.size()) + 1; }

    int id_of(const std::string& token) const;
    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    uint64_t content_hash() const;
};

struct CorpusSplit {
    std::vector<Document> train;
    std::vector<Document> dev;
    std::vector<Document> test;
};

// Lowercase, split on non-alphanumeric bytes, drop tokens shorter than 2 chars.
std::vector<std::string> tokenize(const std::string& text);

// JSON-lines: {"id":..., "title":..., "abstract":..., "categories":[...]}.
// Malformed lines and duplicate ids raise DataError; documents with empty
// categories are kept but flagged ineligible; a title or abstract that
// tokenizes to nothing raises DataError naming the document.
std::vector<Document> load_corpus(const std::string& path);
void save_corpus(const std::vector<Document>& docs, const std::string& path);

// Tokens with frequency >= min_count, ids by descending frequency then
// lexicographic order. Everything else maps to the shared unknown id.
Vocabulary build_vocabulary(const std::vector<Document>& docs, int min_count);

void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

// Seeded shuffle, then contiguous partition with floor-then-largest-remainder
// sizing. Any empty part raises DataError.
CorpusSplit split_corpus(const std::vector<Document>& docs,
                         const std::array<double, 3>& ratios, uint64_t seed);

enum class PrependMode { kTopic, kRandom };

// Returns copies whose title and abstract both gain `word_count` leading
// tokens: per-document assigned words in kTopic mode (missing assignment
// raises DataError), uniform draws from the vocabulary in kRandom mode.
std::vector<Document> prepend_topic_words(
    const std::vector<Document>& docs,
    const std::map<std::string, std::vector<std::string>>& words_per_doc,
    PrependMode mode, const Vocabulary* vocab, int word_count, uint64_t seed);

struct SyntheticSpec {
    int num_topics = 3;
    int docs_per_topic = 50;
    int vocab_size = 150;
    int doc_length = 60;              // abstract length; titles get doc_length/5
    double overlap = 0.0;             // probability mass on the shared token pool
    double multi_category_fraction = 0.2;
    // Paraphrase mode: titles draw from one half of the topic block, abstracts
    // from the other, so query/passage lexical overlap collapses while the
    // topical signal stays intact.
    bool paraphrase = false;
    uint64_t seed = 7;
};

std::vector<Document> generate_synthetic_corpus(const SyntheticSpec& spec);

// Planted topic index parsed back out of a synthetic document id ("syn-t2-d031").
int planted_topic_of(const Document& doc);

}  // namespace topicdpr
