#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "topicdpr/corpus.hpp"
#include "topicdpr/encoder.hpp"
#include "topicdpr/hlda.hpp"
#include "topicdpr/objectives.hpp"
#include "topicdpr/prompt_bank.hpp"
#include "topicdpr/retrieval.hpp"

namespace topicdpr {

enum class TrainMode { kTopicPrompts, kSinglePrompt, kNoPrompt };
const char* mode_name(TrainMode mode);
TrainMode mode_from_string(const std::string& name);

struct TrainConfig {
    TrainMode mode = TrainMode::kTopicPrompts;
    int batch_size = 16;
    int epochs = 10;
    int max_steps = 0;  // global-step cap; 0 runs every scheduled batch
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // 0 disables clipping
    bool freeze_encoder = false;
    uint64_t seed = 7;
    LossConfig loss;
    int prompt_len = 8;
    int topic_word_count = 20;  // words offered to each prompt
    int prompt_level = 1;       // hierarchy level the prompts are drawn from
    // Cap on prompts x passages encoded per step for the hinge term; batches
    // whose full grid would exceed it use a seeded subset of passages.
    int topic_grid_budget = 256;
    int patience = 3;  // dev evaluations without an MRR gain before stopping; 0 disables
    int eval_k = 10;
    std::string diagnostic_dir;  // where a halt on non-finite loss dumps state

    void validate() const;
};

struct ModelParams {
    EncoderConfig config;
    EncoderParams encoder;
    PromptBankParams prompt_bank;

    template <class F>
    void visit(F&& f) {
        encoder.visit(f);
        prompt_bank.visit(f);
    }
    template <class F>
    void visit(F&& f) const { const_cast<ModelParams*>(this)->visit(std::forward<F>(f)); }
};

ModelParams init_model(const EncoderConfig& config, uint64_t seed);

// The prompts in play. no_prompt carries none; single_prompt carries exactly
// one (the most populated topic at prompt_level); topic_prompts carries one
// per selected topic. Word lists are token ids in rank order.
struct PromptSetup {
    TrainMode mode = TrainMode::kNoPrompt;
    int prompt_len = 0;
    std::vector<int64_t> prompt_topic_ids;
    std::vector<std::vector<int>> prompt_words;

    int num_prompts() const { return static_cast<int>(prompt_words.size()); }
};

PromptSetup build_prompt_setup(const HldaState& topics, const TrainConfig& config);

// -1 in no_prompt mode, 0 in single_prompt mode; otherwise the argmax of the
// document's topic mixture over the prompt topics, from the fitted assignment
// when the id was part of the fit and from a frozen-count fold-in otherwise.
int prompt_index_for(const HldaState& topics, const PromptSetup& setup, const Document& doc,
                     const Vocabulary& vocab);

LayerPrefixes prefixes_for_prompt(const ModelParams& model, const PromptSetup& setup, int k);

Representation encode_document(const ModelParams& model, const PromptSetup& setup,
                               const Document& doc, const Vocabulary& vocab, Role role,
                               int prompt_index);

std::vector<Representation> encode_documents(const ModelParams& model, const PromptSetup& setup,
                                             const std::vector<Document>& docs,
                                             const Vocabulary& vocab, const HldaState& topics,
                                             Role role);

struct StepInputs {
    std::vector<const Document*> docs;  // the batch, size >= 2
    std::vector<int> prompt_indices;    // aligned with docs; -1 means no prefix
    std::vector<int> grid_positions;    // batch positions in the hinge grid; empty skips it
};

struct StepStats {
    double total = 0.0;
    double query_passage = 0.0;
    double query_query = 0.0;
    double topic = 0.0;
    int query_passage_active = 0;
    int query_query_active = 0;
    int truncated = 0;
};

// One forward/backward pass over a batch; deterministic, no internal RNG.
// Gradients land keyed by tensor name (zero matrices where nothing flows);
// pass nullptr to skip the backward pass.
StepStats value_and_gradient(const ModelParams& model, const PromptSetup& setup,
                             const StepInputs& inputs, const Vocabulary& vocab,
                             const LossConfig& loss, std::map<std::string, Matrix>* gradients);

struct AdamState {
    int64_t step = 0;  // bias-correction counter, increments per update
    std::map<std::string, Matrix> first_moment;
    std::map<std::string, Matrix> second_moment;
};

struct StepRecord {
    int64_t step = 0;  // global, 1-based
    int epoch = 0;
    StepStats loss;
    double grad_norm = 0.0;     // pre-clip global norm over trainable tensors
    double clipped_norm = 0.0;  // equals grad_norm when clipping did not trigger
};

struct EvalRecord {
    int epoch = 0;
    int64_t step = 0;
    double mrr = 0.0;
};

struct TrainerCheckpoint {
    TrainConfig config;
    ModelParams model;
    PromptSetup prompts;
    AdamState adam;
    uint64_t topics_hash = 0;  // topic model the prompts were built from
    uint64_t vocab_hash = 0;
    int64_t global_step = 0;
    int next_epoch = 0;
    int next_step_in_epoch = 0;
    std::vector<StepRecord> history;
    std::vector<EvalRecord> dev_history;
    double best_dev_mrr = -1.0;
    int evals_since_best = 0;
    bool stopped_early = false;
};

// Round-robin schedule: documents grouped by prompt index, groups shuffled by
// an epoch-derived stream, then dealt one per group in rotation and chunked.
// A trailing chunk of fewer than two documents is dropped.
std::vector<std::vector<int>> epoch_batches(const std::vector<int>& prompt_indices,
                                            int batch_size, uint64_t seed, int epoch);

TrainerCheckpoint train(const CorpusSplit& split, const HldaState& topics,
                        const Vocabulary& vocab, const EncoderConfig& encoder_config,
                        const TrainConfig& config);

// Runs a loaded checkpoint forward to config.epochs / config.max_steps; the
// trajectory matches what uninterrupted training would have produced.
void continue_training(TrainerCheckpoint& ckpt, const CorpusSplit& split,
                       const HldaState& topics, const Vocabulary& vocab);

// Dev-set retrieval: abstracts indexed as passages, titles run as queries.
MetricsReport evaluate_dev(const TrainerCheckpoint& ckpt, const std::vector<Document>& dev,
                           const Vocabulary& vocab, const HldaState& topics,
                           const std::vector<int>& k_values);

// Directory layout: config.json, params.bin, optimizer.bin, history.jsonl.
void save_checkpoint(const TrainerCheckpoint& ckpt, const std::string& dir);
TrainerCheckpoint load_checkpoint(const std::string& dir);

// Content hash of a fitted topic state, for prompt staleness detection.
uint64_t topics_content_hash(const HldaState& state);

}  // namespace topicdpr
