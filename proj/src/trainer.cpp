#include "topicdpr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "topicdpr/checkpoint.hpp"
#include "topicdpr/common.hpp"

namespace topicdpr {

using json = nlohmann::json;

const char* mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::kTopicPrompts: return "topic_prompts";
        case TrainMode::kSinglePrompt: return "single_prompt";
        case TrainMode::kNoPrompt: return "no_prompt";
    }
    return "unknown";
}

TrainMode mode_from_string(const std::string& name) {
    if (name == "topic_prompts") return TrainMode::kTopicPrompts;
    if (name == "single_prompt") return TrainMode::kSinglePrompt;
    if (name == "no_prompt") return TrainMode::kNoPrompt;
    throw DataError("unknown training mode: " + name);
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw DataError("batch_size must be >= 2");
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (max_steps < 0) throw DataError("max_steps must be >= 0");
    if (learning_rate <= 0.0) throw DataError("learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw DataError("moment coefficients must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) throw DataError("adam_eps must be positive");
    if (clip_norm < 0.0) throw DataError("clip_norm must be >= 0");
    if (prompt_len < 1) throw DataError("prompt_len must be >= 1");
    if (topic_word_count < 1) throw DataError("topic_word_count must be >= 1");
    if (prompt_level < 0) throw DataError("prompt_level must be >= 0");
    if (topic_grid_budget < 0) throw DataError("topic_grid_budget must be >= 0");
    if (patience < 0) throw DataError("patience must be >= 0");
    if (eval_k < 1) throw DataError("eval_k must be >= 1");
    if (freeze_encoder && mode == TrainMode::kNoPrompt) {
        throw DataError("freeze_encoder with no_prompt leaves nothing trainable");
    }
    loss.validate();
}

ModelParams init_model(const EncoderConfig& config, uint64_t seed) {
    ModelParams m;
    m.config = config;
    m.encoder = init_encoder(config, seed);
    m.prompt_bank = init_prompt_bank(m.encoder, config, seed);
    return m;
}

PromptSetup build_prompt_setup(const HldaState& topics, const TrainConfig& config) {
    PromptSetup setup;
    setup.mode = config.mode;
    if (config.mode == TrainMode::kNoPrompt) return setup;
    setup.prompt_len = config.prompt_len;

    std::vector<int64_t> ids;
    if (config.mode == TrainMode::kTopicPrompts) {
        ids = select_prompt_topics(topics, config.prompt_level);
    } else {
        // The baseline needs only the most populated topic; a level with one
        // node is acceptable here.
        for (const auto& [id, node] : topics.nodes) {
            if (node.level == config.prompt_level) ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end(), [&](int64_t a, int64_t b) {
            const auto& na = topics.nodes.at(a);
            const auto& nb = topics.nodes.at(b);
            if (na.doc_count != nb.doc_count) return na.doc_count > nb.doc_count;
            return a < b;
        });
        if (ids.empty()) {
            throw DataError("no topics at level " + std::to_string(config.prompt_level));
        }
        ids.resize(1);
    }

    for (int64_t id : ids) {
        TopicWordSet ws = top_words(topics, id, config.topic_word_count);
        if (ws.words.empty()) {
            log_info("prompt topic " + std::to_string(id) + " has no words and was skipped");
            continue;
        }
        setup.prompt_topic_ids.push_back(id);
        setup.prompt_words.push_back(ws.words);
    }
    int needed = config.mode == TrainMode::kTopicPrompts ? 2 : 1;
    if (setup.num_prompts() < needed) {
        throw DataError("not enough usable prompt topics at level " +
                        std::to_string(config.prompt_level));
    }
    return setup;
}

int prompt_index_for(const HldaState& topics, const PromptSetup& setup, const Document& doc,
                     const Vocabulary& vocab) {
    if (setup.mode == TrainMode::kNoPrompt) return -1;
    if (setup.mode == TrainMode::kSinglePrompt) return 0;
    TopicDistribution dist;
    if (topics.doc_index.count(doc.id) > 0) {
        dist = doc_topic_distribution(topics, doc.id);
    } else {
        std::vector<std::string> text = doc.title;
        text.insert(text.end(), doc.abstract_text.begin(), doc.abstract_text.end());
        dist = fold_in_distribution(topics, vocab.encode(text), doc.id);
    }
    return assign_prompt(dist, setup.prompt_topic_ids);
}

LayerPrefixes prefixes_for_prompt(const ModelParams& model, const PromptSetup& setup, int k) {
    if (k < 0 || k >= setup.num_prompts()) {
        throw DataError("prompt index out of range: " + std::to_string(k));
    }
    Matrix prompt = encode_prompt(model.prompt_bank, setup.prompt_words[k], setup.prompt_len);
    return project_prefix(model.prompt_bank, prompt, model.config.num_layers, model.config.dim);
}

Representation encode_document(const ModelParams& model, const PromptSetup& setup,
                               const Document& doc, const Vocabulary& vocab, Role role,
                               int prompt_index) {
    const auto& text = role == Role::kQuery ? doc.title : doc.abstract_text;
    LayerPrefixes prefixes;
    const LayerPrefixes* pp = nullptr;
    if (prompt_index >= 0) {
        prefixes = prefixes_for_prompt(model, setup, prompt_index);
        pp = &prefixes;
    }
    return encode(model.encoder, model.config, vocab.encode(text), pp, role, doc.id, prompt_index);
}

std::vector<Representation> encode_documents(const ModelParams& model, const PromptSetup& setup,
                                             const std::vector<Document>& docs,
                                             const Vocabulary& vocab, const HldaState& topics,
                                             Role role) {
    std::vector<LayerPrefixes> cache(setup.num_prompts());
    std::vector<bool> ready(setup.num_prompts(), false);
    std::vector<Representation> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        int k = prompt_index_for(topics, setup, doc, vocab);
        const LayerPrefixes* pp = nullptr;
        if (k >= 0) {
            if (!ready[static_cast<size_t>(k)]) {
                cache[static_cast<size_t>(k)] = prefixes_for_prompt(model, setup, k);
                ready[static_cast<size_t>(k)] = true;
            }
            pp = &cache[static_cast<size_t>(k)];
        }
        const auto& text = role == Role::kQuery ? doc.title : doc.abstract_text;
        out.push_back(encode(model.encoder, model.config, vocab.encode(text), pp, role, doc.id, k));
    }
    return out;
}

namespace {

void collect_leaf_vars(const EncoderVars& enc, const PromptVars& pv,
                       std::vector<std::pair<std::string, ad::Var>>& out) {
    out.emplace_back("encoder/token_embeddings", enc.token_embeddings);
    out.emplace_back("encoder/position_embeddings", enc.position_embeddings);
    for (size_t i = 0; i < enc.layers.size(); ++i) {
        const std::string p = "encoder/layer" + std::to_string(i) + "/";
        const EncoderLayerVars& l = enc.layers[i];
        out.emplace_back(p + "wq", l.wq);
        out.emplace_back(p + "bq", l.bq);
        out.emplace_back(p + "wk", l.wk);
        out.emplace_back(p + "bk", l.bk);
        out.emplace_back(p + "wv", l.wv);
        out.emplace_back(p + "bv", l.bv);
        out.emplace_back(p + "wo", l.wo);
        out.emplace_back(p + "bo", l.bo);
        out.emplace_back(p + "w1", l.w1);
        out.emplace_back(p + "b1", l.b1);
        out.emplace_back(p + "w2", l.w2);
        out.emplace_back(p + "b2", l.b2);
        out.emplace_back(p + "ln1_gain", l.ln1_gain);
        out.emplace_back(p + "ln1_offset", l.ln1_offset);
        out.emplace_back(p + "ln2_gain", l.ln2_gain);
        out.emplace_back(p + "ln2_offset", l.ln2_offset);
    }
    out.emplace_back("prompt/embeddings", pv.embeddings);
    out.emplace_back("prompt/residual_w", pv.residual_w);
    out.emplace_back("prompt/residual_b", pv.residual_b);
    out.emplace_back("prompt/prefix_m", pv.prefix_m);
}

bool trainable_name(const TrainConfig& config, const std::string& name) {
    if (config.freeze_encoder && name.rfind("encoder/", 0) == 0) return false;
    if (config.mode == TrainMode::kNoPrompt && name.rfind("prompt/", 0) == 0) return false;
    return true;
}

// Returns (pre-clip, post-clip) global norm over trainable tensors.
std::pair<double, double> clip_gradients(std::map<std::string, Matrix>& grads,
                                         const TrainConfig& config) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        if (trainable_name(config, name)) sq += g.squaredNorm();
    }
    double norm = std::sqrt(sq);
    if (config.clip_norm <= 0.0 || norm <= config.clip_norm) return {norm, norm};
    double scale = config.clip_norm / norm;
    for (auto& [name, g] : grads) {
        if (trainable_name(config, name)) g *= scale;
    }
    return {norm, config.clip_norm};
}

void adam_update(ModelParams& model, AdamState& adam, const std::map<std::string, Matrix>& grads,
                 const TrainConfig& config) {
    adam.step += 1;
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
    model.visit([&](const std::string& name, Matrix& param) {
        if (!trainable_name(config, name)) return;
        auto it = grads.find(name);
        if (it == grads.end()) throw DataError("missing gradient for " + name);
        const Matrix& g = it->second;
        Matrix& m = adam.first_moment[name];
        Matrix& v = adam.second_moment[name];
        if (m.size() == 0) m = Matrix::Zero(param.rows(), param.cols());
        if (v.size() == 0) v = Matrix::Zero(param.rows(), param.cols());
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
        param.array() -= config.learning_rate * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + config.adam_eps);
    });
}

std::vector<int> grid_for_batch(int batch_size, int num_prompts, int budget, uint64_t seed,
                                int epoch, int step_in_epoch) {
    if (num_prompts < 2 || budget <= 0) return {};
    std::vector<int> positions(static_cast<size_t>(batch_size));
    std::iota(positions.begin(), positions.end(), 0);
    int cap = std::max(1, budget / num_prompts);
    if (batch_size <= cap) return positions;
    std::mt19937_64 rng(mix_seed(seed, fnv1a64("grid"),
                                 (static_cast<uint64_t>(epoch) << 32) |
                                     static_cast<uint64_t>(step_in_epoch)));
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(static_cast<size_t>(cap));
    std::sort(positions.begin(), positions.end());
    return positions;
}

std::string step_line(const StepRecord& r) {
    std::ostringstream os;
    os << "step=" << r.step << " epoch=" << r.epoch << " loss_total=" << r.loss.total
       << " loss_qp=" << r.loss.query_passage << " loss_qq=" << r.loss.query_query
       << " loss_topic=" << r.loss.topic << " qp_active=" << r.loss.query_passage_active
       << " qq_active=" << r.loss.query_query_active << " grad_norm=" << r.grad_norm
       << " clipped=" << r.clipped_norm;
    return os.str();
}

}  // namespace

StepStats value_and_gradient(const ModelParams& model, const PromptSetup& setup,
                             const StepInputs& inputs, const Vocabulary& vocab,
                             const LossConfig& loss, std::map<std::string, Matrix>* gradients) {
    const int n = static_cast<int>(inputs.docs.size());
    if (n < 2) throw DataError("a batch needs at least two documents");
    if (inputs.prompt_indices.size() != inputs.docs.size()) {
        throw DataError("prompt indices misaligned with the batch");
    }

    ad::Tape tape;
    EncoderVars enc = encoder_leafs(tape, model.encoder);
    PromptVars pv = prompt_leafs(tape, model.prompt_bank);

    std::vector<LayerPrefixVars> prefix_vars(static_cast<size_t>(setup.num_prompts()));
    for (int k = 0; k < setup.num_prompts(); ++k) {
        ad::Var prompt = encode_prompt(tape, pv, setup.prompt_words[static_cast<size_t>(k)],
                                       setup.prompt_len);
        prefix_vars[static_cast<size_t>(k)] =
            project_prefix(tape, pv, prompt, model.config.num_layers, model.config.dim);
    }

    StepStats stats;
    std::vector<ad::Var> queries(static_cast<size_t>(n)), passages(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int k = inputs.prompt_indices[static_cast<size_t>(i)];
        if (k >= setup.num_prompts()) throw DataError("prompt index out of range");
        const LayerPrefixVars* pp = k >= 0 ? &prefix_vars[static_cast<size_t>(k)] : nullptr;
        bool trunc = false;
        queries[static_cast<size_t>(i)] = encode_tokens(
            tape, enc, model.config, vocab.encode(inputs.docs[static_cast<size_t>(i)]->title), pp,
            &trunc);
        stats.truncated += trunc ? 1 : 0;
        passages[static_cast<size_t>(i)] = encode_tokens(
            tape, enc, model.config,
            vocab.encode(inputs.docs[static_cast<size_t>(i)]->abstract_text), pp, &trunc);
        stats.truncated += trunc ? 1 : 0;
    }

    MinedBatch mined = mine_in_batch(inputs.docs);

    std::vector<std::vector<ad::Var>> topic_reps;
    if (!inputs.grid_positions.empty() && setup.num_prompts() >= 2) {
        topic_reps.assign(static_cast<size_t>(setup.num_prompts()), {});
        for (int z = 0; z < setup.num_prompts(); ++z) {
            auto& row = topic_reps[static_cast<size_t>(z)];
            row.reserve(inputs.grid_positions.size());
            for (int pos : inputs.grid_positions) {
                if (pos < 0 || pos >= n) throw DataError("grid position out of range");
                if (inputs.prompt_indices[static_cast<size_t>(pos)] == z) {
                    row.push_back(passages[static_cast<size_t>(pos)]);
                } else {
                    bool trunc = false;
                    row.push_back(encode_tokens(
                        tape, enc, model.config,
                        vocab.encode(inputs.docs[static_cast<size_t>(pos)]->abstract_text),
                        &prefix_vars[static_cast<size_t>(z)], &trunc));
                }
            }
        }
    }

    BatchLossVars lv = batch_loss(tape, mined, queries, passages, topic_reps, loss);
    stats.total = tape.value(lv.total)(0, 0);
    stats.query_passage = tape.value(lv.query_passage)(0, 0);
    stats.query_query = tape.value(lv.query_query)(0, 0);
    stats.topic = lv.topic.valid() ? tape.value(lv.topic)(0, 0) : 0.0;
    stats.query_passage_active = lv.query_passage_active;
    stats.query_query_active = lv.query_query_active;

    if (gradients != nullptr) {
        tape.backward(lv.total);
        gradients->clear();
        std::vector<std::pair<std::string, ad::Var>> leafs;
        collect_leaf_vars(enc, pv, leafs);
        for (const auto& [name, var] : leafs) {
            (*gradients)[name] = tape.grad(var);
        }
    }
    return stats;
}

std::vector<std::vector<int>> epoch_batches(const std::vector<int>& prompt_indices,
                                            int batch_size, uint64_t seed, int epoch) {
    if (batch_size < 2) throw DataError("batch_size must be >= 2");
    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < prompt_indices.size(); ++i) {
        groups[prompt_indices[i]].push_back(static_cast<int>(i));
    }

    std::mt19937_64 rng(mix_seed(seed, fnv1a64("schedule"), static_cast<uint64_t>(epoch)));
    for (auto& [k, g] : groups) std::shuffle(g.begin(), g.end(), rng);

    std::vector<int> order;
    order.reserve(prompt_indices.size());
    std::vector<std::pair<const std::vector<int>*, size_t>> cursors;
    for (auto& [k, g] : groups) cursors.emplace_back(&g, 0);
    bool any = true;
    while (any) {
        any = false;
        for (auto& [g, pos] : cursors) {
            if (pos < g->size()) {
                order.push_back((*g)[pos++]);
                any = true;
            }
        }
    }

    std::vector<std::vector<int>> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        if (end - start < 2) break;
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

TrainerCheckpoint train(const CorpusSplit& split, const HldaState& topics,
                        const Vocabulary& vocab, const EncoderConfig& encoder_config,
                        const TrainConfig& config) {
    config.validate();
    encoder_config.validate();
    if (encoder_config.vocab_size != vocab.size_with_unknown()) {
        throw DataError("encoder vocab size does not match the vocabulary");
    }

    TrainerCheckpoint ckpt;
    ckpt.config = config;
    ckpt.model = init_model(encoder_config, config.seed);
    ckpt.prompts = build_prompt_setup(topics, config);
    ckpt.topics_hash = topics_content_hash(topics);
    ckpt.vocab_hash = vocab.content_hash();
    continue_training(ckpt, split, topics, vocab);
    return ckpt;
}

void continue_training(TrainerCheckpoint& ckpt, const CorpusSplit& split,
                       const HldaState& topics, const Vocabulary& vocab) {
    const TrainConfig& config = ckpt.config;
    config.validate();
    if (split.train.size() < 2) throw DataError("training split needs at least two documents");
    if (ckpt.topics_hash != topics_content_hash(topics)) {
        throw DataError("checkpoint was built from a different topic model");
    }
    if (ckpt.vocab_hash != vocab.content_hash()) {
        throw DataError("checkpoint was built from a different vocabulary");
    }
    if (ckpt.stopped_early) return;

    std::vector<int> assignment(split.train.size());
    for (size_t i = 0; i < split.train.size(); ++i) {
        assignment[i] = prompt_index_for(topics, ckpt.prompts, split.train[i], vocab);
    }

    auto dump_diagnostic = [&](const std::string& why) {
        if (config.diagnostic_dir.empty()) return;
        try {
            save_checkpoint(ckpt, config.diagnostic_dir);
            log_error("state dumped to " + config.diagnostic_dir + " after " + why);
        } catch (const std::exception& e) {
            log_error(std::string("diagnostic dump failed: ") + e.what());
        }
    };

    bool out_of_steps = false;
    for (int epoch = ckpt.next_epoch; epoch < config.epochs && !ckpt.stopped_early; ++epoch) {
        auto batches = epoch_batches(assignment, config.batch_size, config.seed, epoch);
        if (batches.empty()) throw DataError("schedule produced no usable batches");
        int b = epoch == ckpt.next_epoch ? ckpt.next_step_in_epoch : 0;
        for (; b < static_cast<int>(batches.size()); ++b) {
            if (config.max_steps > 0 && ckpt.global_step >= config.max_steps) {
                out_of_steps = true;
                break;
            }
            StepInputs inputs;
            for (int pos : batches[static_cast<size_t>(b)]) {
                inputs.docs.push_back(&split.train[static_cast<size_t>(pos)]);
                inputs.prompt_indices.push_back(assignment[static_cast<size_t>(pos)]);
            }
            if (config.mode == TrainMode::kTopicPrompts) {
                inputs.grid_positions =
                    grid_for_batch(static_cast<int>(inputs.docs.size()),
                                   ckpt.prompts.num_prompts(), config.topic_grid_budget,
                                   config.seed, epoch, b);
            }

            std::map<std::string, Matrix> grads;
            StepStats stats;
            try {
                stats = value_and_gradient(ckpt.model, ckpt.prompts, inputs, vocab, config.loss,
                                           &grads);
            } catch (const NumericError& e) {
                ckpt.next_epoch = epoch;
                ckpt.next_step_in_epoch = b;
                dump_diagnostic(std::string("numerical failure: ") + e.what());
                throw;
            }
            auto [pre, post] = clip_gradients(grads, config);
            adam_update(ckpt.model, ckpt.adam, grads, config);
            ckpt.global_step += 1;

            StepRecord rec;
            rec.step = ckpt.global_step;
            rec.epoch = epoch;
            rec.loss = stats;
            rec.grad_norm = pre;
            rec.clipped_norm = post;
            ckpt.history.push_back(rec);
            log_info(step_line(rec));
        }
        if (out_of_steps || b < static_cast<int>(batches.size())) {
            ckpt.next_epoch = epoch;
            ckpt.next_step_in_epoch = b;
            break;
        }
        ckpt.next_epoch = epoch + 1;
        ckpt.next_step_in_epoch = 0;

        if (!split.dev.empty()) {
            MetricsReport report = evaluate_dev(ckpt, split.dev, vocab, topics, {config.eval_k});
            double mrr = report.values.at("mrr@" + std::to_string(config.eval_k));
            EvalRecord er;
            er.epoch = epoch;
            er.step = ckpt.global_step;
            er.mrr = mrr;
            ckpt.dev_history.push_back(er);
            log_info("epoch=" + std::to_string(epoch) + " dev_mrr@" +
                     std::to_string(config.eval_k) + "=" + std::to_string(mrr));
            if (mrr > ckpt.best_dev_mrr + 1e-9) {
                ckpt.best_dev_mrr = mrr;
                ckpt.evals_since_best = 0;
            } else {
                ckpt.evals_since_best += 1;
                if (config.patience > 0 && ckpt.evals_since_best >= config.patience) {
                    ckpt.stopped_early = true;
                    log_info("dev mrr plateaued after epoch " + std::to_string(epoch) +
                             "; stopping");
                }
            }
        }
    }
}

MetricsReport evaluate_dev(const TrainerCheckpoint& ckpt, const std::vector<Document>& dev,
                           const Vocabulary& vocab, const HldaState& topics,
                           const std::vector<int>& k_values) {
    if (dev.empty()) throw DataError("dev split is empty");
    if (k_values.empty()) throw DataError("no cutoffs requested");
    auto passages = encode_documents(ckpt.model, ckpt.prompts, dev, vocab, topics,
                                     Role::kPassage);
    auto queries = encode_documents(ckpt.model, ckpt.prompts, dev, vocab, topics, Role::kQuery);

    std::vector<std::vector<std::string>> cats;
    cats.reserve(dev.size());
    for (const auto& d : dev) cats.push_back(d.categories);
    DenseIndex index = build_index(passages, cats);

    int kmax = *std::max_element(k_values.begin(), k_values.end());
    std::vector<RankedList> results;
    results.reserve(queries.size());
    for (const auto& q : queries) results.push_back(search(index, q, kmax));

    std::map<std::string, const std::vector<std::string>*> cat_of;
    for (const auto& d : dev) cat_of[d.id] = &d.categories;
    auto is_rel = [&](const std::string& qid, const std::string& pid) {
        return relevant(qid, *cat_of.at(qid), pid, *cat_of.at(pid));
    };
    auto total_rel = [&](const std::string& qid) {
        int c = 0;
        for (const auto& d : dev) c += is_rel(qid, d.id) ? 1 : 0;
        return c;
    };
    return compute_metrics(results, is_rel, total_rel, k_values);
}

uint64_t topics_content_hash(const HldaState& state) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << state.depth << '|' << state.seed << '|' << state.vocab_size << '|'
       << state.iterations_done << '|' << state.next_node_id << '|' << state.hyper.crp_gamma
       << ',' << state.hyper.alpha << ',' << state.hyper.eta;
    for (const auto& [id, n] : state.nodes) {
        os << "|n" << id << ':' << n.level << ':' << n.parent << ':' << n.doc_count;
        for (const auto& [w, c] : n.word_counts) os << ',' << w << '=' << c;
    }
    for (size_t d = 0; d < state.doc_ids.size(); ++d) {
        os << "|d" << state.doc_ids[d] << ':';
        for (int64_t p : state.doc_path[d]) os << p << '.';
        os << ':';
        for (int8_t l : state.word_levels[d]) os << static_cast<char>('0' + l);
    }
    return fnv1a64(os.str());
}

namespace {

json config_to_json(const TrainerCheckpoint& ckpt) {
    const TrainConfig& c = ckpt.config;
    json j;
    j["format"] = "topicdpr-train-1";
    j["version"] = kVersion;
    j["mode"] = mode_name(c.mode);
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["max_steps"] = c.max_steps;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["clip_norm"] = c.clip_norm;
    j["freeze_encoder"] = c.freeze_encoder;
    j["seed"] = c.seed;
    j["loss"] = {{"gamma", c.loss.gamma}, {"margin", c.loss.margin}, {"alpha", c.loss.alpha}};
    j["prompt_len"] = c.prompt_len;
    j["topic_word_count"] = c.topic_word_count;
    j["prompt_level"] = c.prompt_level;
    j["topic_grid_budget"] = c.topic_grid_budget;
    j["patience"] = c.patience;
    j["eval_k"] = c.eval_k;
    j["diagnostic_dir"] = c.diagnostic_dir;

    const EncoderConfig& e = ckpt.model.config;
    j["encoder"] = {{"dim", e.dim},         {"num_layers", e.num_layers},
                    {"heads", e.heads},     {"ff_dim", e.ff_dim},
                    {"max_len", e.max_len}, {"vocab_size", e.vocab_size},
                    {"ln_eps", e.ln_eps}};

    j["prompts"] = {{"prompt_len", ckpt.prompts.prompt_len},
                    {"topic_ids", ckpt.prompts.prompt_topic_ids},
                    {"words", ckpt.prompts.prompt_words}};

    j["topics_hash"] = hex64(ckpt.topics_hash);
    j["vocab_hash"] = hex64(ckpt.vocab_hash);
    j["adam_step"] = ckpt.adam.step;
    j["global_step"] = ckpt.global_step;
    j["next_epoch"] = ckpt.next_epoch;
    j["next_step_in_epoch"] = ckpt.next_step_in_epoch;
    j["best_dev_mrr"] = ckpt.best_dev_mrr;
    j["evals_since_best"] = ckpt.evals_since_best;
    j["stopped_early"] = ckpt.stopped_early;
    return j;
}

uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

}  // namespace

void save_checkpoint(const TrainerCheckpoint& ckpt, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create checkpoint directory: " + dir);

    {
        std::ofstream f(dir + "/config.json");
        if (!f) throw DataError("cannot write " + dir + "/config.json");
        f << config_to_json(ckpt).dump(2) << '\n';
    }

    std::map<std::string, Matrix> params;
    ckpt.model.visit([&](const std::string& name, const Matrix& m) { params[name] = m; });
    write_tensors(params, dir + "/params.bin");

    std::map<std::string, Matrix> moments;
    for (const auto& [name, m] : ckpt.adam.first_moment) moments["m/" + name] = m;
    for (const auto& [name, m] : ckpt.adam.second_moment) moments["v/" + name] = m;
    write_tensors(moments, dir + "/optimizer.bin");

    std::ofstream hist(dir + "/history.jsonl");
    if (!hist) throw DataError("cannot write " + dir + "/history.jsonl");
    for (const auto& r : ckpt.history) {
        json j;
        j["kind"] = "step";
        j["step"] = r.step;
        j["epoch"] = r.epoch;
        j["loss_total"] = r.loss.total;
        j["loss_qp"] = r.loss.query_passage;
        j["loss_qq"] = r.loss.query_query;
        j["loss_topic"] = r.loss.topic;
        j["qp_active"] = r.loss.query_passage_active;
        j["qq_active"] = r.loss.query_query_active;
        j["truncated"] = r.loss.truncated;
        j["grad_norm"] = r.grad_norm;
        j["clipped_norm"] = r.clipped_norm;
        hist << j.dump() << '\n';
    }
    for (const auto& r : ckpt.dev_history) {
        json j;
        j["kind"] = "eval";
        j["epoch"] = r.epoch;
        j["step"] = r.step;
        j["mrr"] = r.mrr;
        hist << j.dump() << '\n';
    }
}

TrainerCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream f(dir + "/config.json");
    if (!f) throw DataError("cannot open " + dir + "/config.json");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("corrupt checkpoint config in " + dir + ": " + e.what());
    }
    if (j.value("format", "") != "topicdpr-train-1") {
        throw DataError("unrecognized checkpoint format in " + dir);
    }

    TrainerCheckpoint ckpt;
    try {
        TrainConfig& c = ckpt.config;
        c.mode = mode_from_string(j.at("mode").get<std::string>());
        c.batch_size = j.at("batch_size").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.max_steps = j.at("max_steps").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.beta1 = j.at("beta1").get<double>();
        c.beta2 = j.at("beta2").get<double>();
        c.adam_eps = j.at("adam_eps").get<double>();
        c.clip_norm = j.at("clip_norm").get<double>();
        c.freeze_encoder = j.at("freeze_encoder").get<bool>();
        c.seed = j.at("seed").get<uint64_t>();
        c.loss.gamma = j.at("loss").at("gamma").get<double>();
        c.loss.margin = j.at("loss").at("margin").get<double>();
        c.loss.alpha = j.at("loss").at("alpha").get<double>();
        c.prompt_len = j.at("prompt_len").get<int>();
        c.topic_word_count = j.at("topic_word_count").get<int>();
        c.prompt_level = j.at("prompt_level").get<int>();
        c.topic_grid_budget = j.at("topic_grid_budget").get<int>();
        c.patience = j.at("patience").get<int>();
        c.eval_k = j.at("eval_k").get<int>();
        c.diagnostic_dir = j.at("diagnostic_dir").get<std::string>();

        EncoderConfig& e = ckpt.model.config;
        e.dim = j.at("encoder").at("dim").get<int>();
        e.num_layers = j.at("encoder").at("num_layers").get<int>();
        e.heads = j.at("encoder").at("heads").get<int>();
        e.ff_dim = j.at("encoder").at("ff_dim").get<int>();
        e.max_len = j.at("encoder").at("max_len").get<int>();
        e.vocab_size = j.at("encoder").at("vocab_size").get<int>();
        e.ln_eps = j.at("encoder").at("ln_eps").get<double>();

        ckpt.prompts.mode = c.mode;
        ckpt.prompts.prompt_len = j.at("prompts").at("prompt_len").get<int>();
        ckpt.prompts.prompt_topic_ids =
            j.at("prompts").at("topic_ids").get<std::vector<int64_t>>();
        ckpt.prompts.prompt_words =
            j.at("prompts").at("words").get<std::vector<std::vector<int>>>();

        ckpt.topics_hash = parse_hex64(j.at("topics_hash").get<std::string>());
        ckpt.vocab_hash = parse_hex64(j.at("vocab_hash").get<std::string>());
        ckpt.adam.step = j.at("adam_step").get<int64_t>();
        ckpt.global_step = j.at("global_step").get<int64_t>();
        ckpt.next_epoch = j.at("next_epoch").get<int>();
        ckpt.next_step_in_epoch = j.at("next_step_in_epoch").get<int>();
        ckpt.best_dev_mrr = j.at("best_dev_mrr").get<double>();
        ckpt.evals_since_best = j.at("evals_since_best").get<int>();
        ckpt.stopped_early = j.at("stopped_early").get<bool>();
    } catch (const json::exception& e) {
        throw DataError("incomplete checkpoint config in " + dir + ": " + e.what());
    }

    std::map<std::string, Matrix> params = read_tensors(dir + "/params.bin");
    size_t used = 0;
    ckpt.model.encoder.layers.resize(static_cast<size_t>(ckpt.model.config.num_layers));
    ckpt.model.visit([&](const std::string& name, Matrix& m) {
        auto it = params.find(name);
        if (it == params.end()) throw DataError("checkpoint missing tensor " + name);
        m = it->second;
        ++used;
    });
    if (used != params.size()) throw DataError("checkpoint holds unexpected extra tensors");

    for (auto& [name, m] : read_tensors(dir + "/optimizer.bin")) {
        if (name.rfind("m/", 0) == 0) {
            ckpt.adam.first_moment[name.substr(2)] = m;
        } else if (name.rfind("v/", 0) == 0) {
            ckpt.adam.second_moment[name.substr(2)] = m;
        } else {
            throw DataError("unexpected optimizer tensor " + name);
        }
    }

    std::ifstream hist(dir + "/history.jsonl");
    if (hist) {
        std::string line;
        while (std::getline(hist, line)) {
            if (line.empty()) continue;
            json r;
            try {
                r = json::parse(line);
            } catch (const json::exception& e) {
                throw DataError("corrupt history line in " + dir + ": " + e.what());
            }
            if (r.value("kind", "") == "step") {
                StepRecord rec;
                rec.step = r.at("step").get<int64_t>();
                rec.epoch = r.at("epoch").get<int>();
                rec.loss.total = r.at("loss_total").get<double>();
                rec.loss.query_passage = r.at("loss_qp").get<double>();
                rec.loss.query_query = r.at("loss_qq").get<double>();
                rec.loss.topic = r.at("loss_topic").get<double>();
                rec.loss.query_passage_active = r.at("qp_active").get<int>();
                rec.loss.query_query_active = r.at("qq_active").get<int>();
                rec.loss.truncated = r.at("truncated").get<int>();
                rec.grad_norm = r.at("grad_norm").get<double>();
                rec.clipped_norm = r.at("clipped_norm").get<double>();
                ckpt.history.push_back(rec);
            } else if (r.value("kind", "") == "eval") {
                EvalRecord rec;
                rec.epoch = r.at("epoch").get<int>();
                rec.step = r.at("step").get<int64_t>();
                rec.mrr = r.at("mrr").get<double>();
                ckpt.dev_history.push_back(rec);
            }
        }
    }
    return ckpt;
}

}  // namespace topicdpr
