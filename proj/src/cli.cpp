#include "topicdpr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "topicdpr/common.hpp"
#include "topicdpr/corpus.hpp"
#include "topicdpr/diagnostics.hpp"
#include "topicdpr/hlda.hpp"
#include "topicdpr/retrieval.hpp"
#include "topicdpr/trainer.hpp"

namespace topicdpr {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// One manifest per run, next to the outputs. Reruns differ only in the
// duration field, so determinism comparisons must skip manifest files.
void write_manifest(const std::string& path, const std::string& subcommand,
                    const std::string& config_path, uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const json& effective,
                    double duration_seconds) {
    json m;
    m["subcommand"] = subcommand;
    m["config_path"] = config_path;
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["version"] = kVersion;
    m["duration_seconds"] = duration_seconds;
    m["effective_config"] = effective;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write manifest: " + path);
    f << m.dump(2) << '\n';
}

void check_staleness(const TrainerCheckpoint& ckpt, const HldaState& topics,
                     const Vocabulary& vocab) {
    if (ckpt.topics_hash != topics_content_hash(topics)) {
        throw DataError("stale checkpoint: the topic model changed since training");
    }
    if (ckpt.vocab_hash != vocab.content_hash()) {
        throw DataError("stale checkpoint: the vocabulary changed since training");
    }
}

void check_index_staleness(const DenseIndex& index, const TrainerCheckpoint& ckpt,
                           const std::string& ckpt_dir) {
    uint64_t params_hash = fnv1a64_file(ckpt_dir + "/params.bin");
    if (index.checkpoint_hash != params_hash) {
        throw DataError("stale index: built from different model parameters");
    }
    if (index.topics_hash != ckpt.topics_hash || index.vocab_hash != ckpt.vocab_hash) {
        throw DataError("stale index: built from a different topic model or vocabulary");
    }
}

struct SynthOpts {
    std::string out = "corpus.jsonl";
    int topics = 3;
    int docs_per_topic = 50;
    int vocab_size = 150;
    int doc_length = 60;
    double overlap = 0.0;
    double multi_fraction = 0.2;
    bool paraphrase = false;
    uint64_t seed = 7;
};

int do_synth(const SynthOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    SyntheticSpec spec;
    spec.num_topics = o.topics;
    spec.docs_per_topic = o.docs_per_topic;
    spec.vocab_size = o.vocab_size;
    spec.doc_length = o.doc_length;
    spec.overlap = o.overlap;
    spec.multi_category_fraction = o.multi_fraction;
    spec.paraphrase = o.paraphrase;
    spec.seed = o.seed;
    auto docs = generate_synthetic_corpus(spec);
    save_corpus(docs, o.out);
    log_info("wrote " + std::to_string(docs.size()) + " documents to " + o.out);

    json eff{{"out", o.out},
             {"topics", o.topics},
             {"docs_per_topic", o.docs_per_topic},
             {"vocab_size", o.vocab_size},
             {"doc_length", o.doc_length},
             {"overlap", o.overlap},
             {"multi_fraction", o.multi_fraction},
             {"paraphrase", o.paraphrase},
             {"seed", o.seed}};
    write_manifest(o.out + ".manifest.json", "synth", config_path, o.seed, {}, {o.out}, eff,
                   seconds_since(start));
    return 0;
}

struct IngestOpts {
    std::string corpus;
    std::string out_dir = "data";
    double train_ratio = 0.8;
    double dev_ratio = 0.1;
    double test_ratio = 0.1;
    int min_count = 2;
    uint64_t seed = 7;
};

int do_ingest(const IngestOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    auto docs = load_corpus(o.corpus);
    Vocabulary vocab = build_vocabulary(docs, o.min_count);
    CorpusSplit split = split_corpus(docs, {o.train_ratio, o.dev_ratio, o.test_ratio}, o.seed);

    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec) throw DataError("cannot create output directory: " + o.out_dir);
    save_corpus(split.train, o.out_dir + "/train.jsonl");
    save_corpus(split.dev, o.out_dir + "/dev.jsonl");
    save_corpus(split.test, o.out_dir + "/test.jsonl");
    save_vocabulary(vocab, o.out_dir + "/vocab.json");
    log_info("split " + std::to_string(docs.size()) + " documents into " +
             std::to_string(split.train.size()) + "/" + std::to_string(split.dev.size()) + "/" +
             std::to_string(split.test.size()) + "; vocabulary " +
             std::to_string(vocab.id_to_token.size()) + " tokens");

    json eff{{"corpus", o.corpus},       {"out_dir", o.out_dir},
             {"train_ratio", o.train_ratio}, {"dev_ratio", o.dev_ratio},
             {"test_ratio", o.test_ratio},   {"min_count", o.min_count},
             {"seed", o.seed}};
    write_manifest(o.out_dir + "/manifest.json", "ingest", config_path, o.seed, {o.corpus},
                   {o.out_dir + "/train.jsonl", o.out_dir + "/dev.jsonl",
                    o.out_dir + "/test.jsonl", o.out_dir + "/vocab.json"},
                   eff, seconds_since(start));
    return 0;
}

struct TopicsOpts {
    std::string corpus;
    std::string vocab;
    std::string out = "topics.json";
    std::string report;  // empty derives <out>.report.txt
    int depth = 3;
    int iterations = 500;
    double crp_gamma = 1.0;
    double alpha = 10.0;
    double eta = 0.1;
    uint64_t seed = 7;
};

void write_topic_report(const HldaState& state, const Vocabulary& vocab,
                        const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write topic report: " + path);
    f << "nodes " << state.nodes.size() << ", sweeps " << state.iterations_done
      << ", joint log likelihood " << joint_log_likelihood(state) << "\n\n";

    std::vector<int64_t> stack{state.root_id};
    while (!stack.empty()) {
        int64_t id = stack.back();
        stack.pop_back();
        const TopicNode& n = state.nodes.at(id);
        std::string indent(static_cast<size_t>(n.level) * 2, ' ');
        f << indent << "node " << n.id << " level " << n.level << " docs " << n.doc_count
          << " words " << n.total_words << '\n';
        TopicWordSet ws = top_words(state, id, 10);
        f << indent << "  top:";
        for (int w : ws.words) f << ' ' << vocab.id_to_token[static_cast<size_t>(w)];
        f << '\n';
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }

    f << "\nprompt topics (level 1, by document count):";
    try {
        for (int64_t id : select_prompt_topics(state, 1)) f << ' ' << id;
        f << '\n';
    } catch (const DataError&) {
        f << " fewer than two level-1 topics\n";
    }
}

int do_topics(const TopicsOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    auto docs = load_corpus(o.corpus);
    Vocabulary vocab = load_vocabulary(o.vocab);
    HldaHyperparams hyper;
    hyper.crp_gamma = o.crp_gamma;
    hyper.alpha = o.alpha;
    hyper.eta = o.eta;
    HldaState state = fit_hlda(docs, vocab, o.depth, o.iterations, hyper, o.seed);
    save_hlda(state, o.out);

    std::string report = o.report.empty() ? o.out + ".report.txt" : o.report;
    write_topic_report(state, vocab, report);
    log_info("fitted " + std::to_string(state.nodes.size()) + " topic nodes; report in " +
             report);

    json eff{{"corpus", o.corpus},  {"vocab", o.vocab}, {"out", o.out},
             {"report", report},    {"depth", o.depth}, {"iterations", o.iterations},
             {"crp_gamma", o.crp_gamma}, {"alpha", o.alpha}, {"eta", o.eta},
             {"seed", o.seed}};
    write_manifest(o.out + ".manifest.json", "topics", config_path, o.seed,
                   {o.corpus, o.vocab}, {o.out, report}, eff, seconds_since(start));
    return 0;
}

struct TrainOpts {
    std::string train_corpus;
    std::string dev_corpus;  // optional; empty disables dev evaluation
    std::string vocab;
    std::string topics;
    std::string out = "run";
    std::string mode = "topic_prompts";
    bool freeze_encoder = false;
    int batch_size = 16;
    int epochs = 10;
    int max_steps = 0;
    double learning_rate = 2e-4;
    double clip_norm = 1.0;
    uint64_t seed = 7;
    double gamma = 0.05;
    double margin = 0.2;
    double alpha = 0.1;
    int prompt_len = 8;
    int topic_word_count = 20;
    int prompt_level = 1;
    int topic_grid_budget = 256;
    int patience = 3;
    int eval_k = 10;
    int dim = 64;
    int num_layers = 2;
    int heads = 4;
    int ff_dim = 256;
    int max_len = 64;
};

int do_train(const TrainOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    CorpusSplit split;
    split.train = load_corpus(o.train_corpus);
    if (!o.dev_corpus.empty()) split.dev = load_corpus(o.dev_corpus);
    Vocabulary vocab = load_vocabulary(o.vocab);
    HldaState topics = load_hlda(o.topics);

    EncoderConfig ec;
    ec.dim = o.dim;
    ec.num_layers = o.num_layers;
    ec.heads = o.heads;
    ec.ff_dim = o.ff_dim;
    ec.max_len = o.max_len;
    ec.vocab_size = vocab.size_with_unknown();

    TrainConfig tc;
    tc.mode = mode_from_string(o.mode);
    tc.batch_size = o.batch_size;
    tc.epochs = o.epochs;
    tc.max_steps = o.max_steps;
    tc.learning_rate = o.learning_rate;
    tc.clip_norm = o.clip_norm;
    tc.freeze_encoder = o.freeze_encoder;
    tc.seed = o.seed;
    tc.loss.gamma = o.gamma;
    tc.loss.margin = o.margin;
    tc.loss.alpha = o.alpha;
    tc.prompt_len = o.prompt_len;
    tc.topic_word_count = o.topic_word_count;
    tc.prompt_level = o.prompt_level;
    tc.topic_grid_budget = o.topic_grid_budget;
    tc.patience = o.patience;
    tc.eval_k = o.eval_k;
    tc.diagnostic_dir = o.out + "/diagnostic";

    TrainerCheckpoint ckpt = train(split, topics, vocab, ec, tc);
    save_checkpoint(ckpt, o.out);
    log_info("trained " + std::to_string(ckpt.global_step) + " steps; checkpoint in " + o.out);

    json eff{{"train_corpus", o.train_corpus},
             {"dev_corpus", o.dev_corpus},
             {"vocab", o.vocab},
             {"topics", o.topics},
             {"out", o.out},
             {"mode", o.mode},
             {"freeze_encoder", o.freeze_encoder},
             {"batch_size", o.batch_size},
             {"epochs", o.epochs},
             {"max_steps", o.max_steps},
             {"learning_rate", o.learning_rate},
             {"clip_norm", o.clip_norm},
             {"seed", o.seed},
             {"gamma", o.gamma},
             {"margin", o.margin},
             {"alpha", o.alpha},
             {"prompt_len", o.prompt_len},
             {"topic_word_count", o.topic_word_count},
             {"prompt_level", o.prompt_level},
             {"topic_grid_budget", o.topic_grid_budget},
             {"patience", o.patience},
             {"eval_k", o.eval_k},
             {"dim", o.dim},
             {"num_layers", o.num_layers},
             {"heads", o.heads},
             {"ff_dim", o.ff_dim},
             {"max_len", o.max_len}};
    std::vector<std::string> inputs{o.train_corpus, o.vocab, o.topics};
    if (!o.dev_corpus.empty()) inputs.push_back(o.dev_corpus);
    write_manifest(o.out + "/manifest.json", "train", config_path, o.seed, inputs, {o.out}, eff,
                   seconds_since(start));
    return 0;
}

struct IndexOpts {
    std::string ckpt;
    std::string vocab;
    std::string topics;
    std::string corpus;
    std::string out = "index.bin";
};

int do_index(const IndexOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    TrainerCheckpoint ckpt = load_checkpoint(o.ckpt);
    Vocabulary vocab = load_vocabulary(o.vocab);
    HldaState topics = load_hlda(o.topics);
    check_staleness(ckpt, topics, vocab);

    auto docs = load_corpus(o.corpus);
    auto reps = encode_documents(ckpt.model, ckpt.prompts, docs, vocab, topics, Role::kPassage);
    std::vector<std::vector<std::string>> cats;
    cats.reserve(docs.size());
    for (const auto& d : docs) cats.push_back(d.categories);

    DenseIndex index = build_index(reps, cats);
    index.checkpoint_hash = fnv1a64_file(o.ckpt + "/params.bin");
    index.topics_hash = ckpt.topics_hash;
    index.vocab_hash = ckpt.vocab_hash;
    save_index(index, o.out);
    log_info("indexed " + std::to_string(index.size()) + " passages into " + o.out);

    json eff{{"ckpt", o.ckpt},     {"vocab", o.vocab}, {"topics", o.topics},
             {"corpus", o.corpus}, {"out", o.out}};
    write_manifest(o.out + ".manifest.json", "index", config_path, ckpt.config.seed,
                   {o.ckpt, o.vocab, o.topics, o.corpus}, {o.out}, eff, seconds_since(start));
    return 0;
}

struct SearchOpts {
    std::string index;
    std::string ckpt;
    std::string vocab;
    std::string topics;
    std::string query;
    std::string out = "search_results.tsv";
    int k = 10;
};

int do_search(const SearchOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    DenseIndex index = load_index(o.index);
    TrainerCheckpoint ckpt = load_checkpoint(o.ckpt);
    Vocabulary vocab = load_vocabulary(o.vocab);
    HldaState topics = load_hlda(o.topics);
    check_staleness(ckpt, topics, vocab);
    check_index_staleness(index, ckpt, o.ckpt);

    auto tokens = tokenize(o.query);
    if (tokens.empty()) throw DataError("query tokenizes to nothing");
    int prompt_index = -1;
    if (ckpt.prompts.mode == TrainMode::kSinglePrompt) {
        prompt_index = 0;
    } else if (ckpt.prompts.mode == TrainMode::kTopicPrompts) {
        TopicDistribution dist =
            fold_in_distribution(topics, vocab.encode(tokens), "query:" + o.query);
        prompt_index = assign_prompt(dist, ckpt.prompts.prompt_topic_ids);
    }
    LayerPrefixes prefixes;
    const LayerPrefixes* pp = nullptr;
    if (prompt_index >= 0) {
        prefixes = prefixes_for_prompt(ckpt.model, ckpt.prompts, prompt_index);
        pp = &prefixes;
    }
    Representation rep = encode(ckpt.model.encoder, ckpt.model.config, vocab.encode(tokens), pp,
                                Role::kQuery, "query", prompt_index);

    RankedList ranked = search(index, rep, o.k);
    for (size_t i = 0; i < ranked.hits.size(); ++i) {
        std::printf("%zu\t%s\t%.6f\n", i + 1, ranked.hits[i].id.c_str(), ranked.hits[i].score);
    }
    save_ranked_lists({ranked}, o.out);

    json eff{{"index", o.index}, {"ckpt", o.ckpt},   {"vocab", o.vocab},
             {"topics", o.topics}, {"query", o.query}, {"out", o.out},
             {"k", o.k}};
    write_manifest(o.out + ".manifest.json", "search", config_path, ckpt.config.seed,
                   {o.index, o.ckpt, o.vocab, o.topics}, {o.out}, eff, seconds_since(start));
    return 0;
}

struct EvalOpts {
    std::string index;
    std::string ckpt;
    std::string vocab;
    std::string topics;
    std::string queries;
    std::string corpus;  // raw passages, required by the bm25 engine
    std::string engine = "dense";
    std::string out = "metrics.json";
    std::string ranked_out;
    std::vector<int> k_values{1, 10};
    bool filter_self = false;
};

int do_eval(const EvalOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    if (o.k_values.empty()) throw DataError("no cutoffs requested");
    auto query_docs = load_corpus(o.queries);
    int kmax = *std::max_element(o.k_values.begin(), o.k_values.end());
    int fetch = kmax + (o.filter_self ? 1 : 0);

    std::vector<RankedList> results;
    std::vector<std::string> passage_ids;
    std::vector<std::vector<std::string>> passage_cats;
    std::vector<std::string> inputs{o.queries};

    if (o.engine == "dense") {
        DenseIndex index = load_index(o.index);
        TrainerCheckpoint ckpt = load_checkpoint(o.ckpt);
        Vocabulary vocab = load_vocabulary(o.vocab);
        HldaState topics = load_hlda(o.topics);
        check_staleness(ckpt, topics, vocab);
        check_index_staleness(index, ckpt, o.ckpt);
        auto reps =
            encode_documents(ckpt.model, ckpt.prompts, query_docs, vocab, topics, Role::kQuery);
        results.reserve(reps.size());
        for (const auto& r : reps) results.push_back(search(index, r, fetch));
        passage_ids = index.ids;
        passage_cats = index.categories;
        inputs.insert(inputs.end(), {o.index, o.ckpt, o.vocab, o.topics});
    } else if (o.engine == "bm25") {
        if (o.corpus.empty()) throw DataError("the bm25 engine needs --corpus");
        auto passages = load_corpus(o.corpus);
        Bm25Index bm25 = build_bm25(passages);
        results.reserve(query_docs.size());
        for (const auto& q : query_docs) {
            results.push_back(bm25_search(bm25, q.title, q.id, fetch));
        }
        for (const auto& p : passages) {
            passage_ids.push_back(p.id);
            passage_cats.push_back(p.categories);
        }
        inputs.push_back(o.corpus);
    } else {
        throw DataError("unknown engine: " + o.engine);
    }

    if (o.filter_self) {
        for (auto& r : results) {
            std::erase_if(r.hits, [&](const ScoredHit& h) { return h.id == r.query_id; });
            if (static_cast<int>(r.hits.size()) > kmax) r.hits.resize(static_cast<size_t>(kmax));
        }
    }

    std::map<std::string, const std::vector<std::string>*> qcats, pcats;
    for (const auto& q : query_docs) qcats[q.id] = &q.categories;
    for (size_t i = 0; i < passage_ids.size(); ++i) pcats[passage_ids[i]] = &passage_cats[i];
    auto is_rel = [&](const std::string& qid, const std::string& pid) {
        return relevant(qid, *qcats.at(qid), pid, *pcats.at(pid));
    };
    auto total_rel = [&](const std::string& qid) {
        int c = 0;
        for (const auto& pid : passage_ids) {
            if (o.filter_self && pid == qid) continue;
            c += is_rel(qid, pid) ? 1 : 0;
        }
        return c;
    };

    MetricsReport report = compute_metrics(results, is_rel, total_rel, o.k_values);
    save_metrics(report, o.out);
    if (!o.ranked_out.empty()) save_ranked_lists(results, o.ranked_out);
    for (const auto& [name, value] : report.values) {
        log_info(name + " = " + std::to_string(value));
    }

    json eff{{"index", o.index},   {"ckpt", o.ckpt},         {"vocab", o.vocab},
             {"topics", o.topics}, {"queries", o.queries},   {"corpus", o.corpus},
             {"engine", o.engine}, {"out", o.out},           {"ranked_out", o.ranked_out},
             {"k", o.k_values},    {"filter_self", o.filter_self}};
    std::vector<std::string> outputs{o.out};
    if (!o.ranked_out.empty()) outputs.push_back(o.ranked_out);
    write_manifest(o.out + ".manifest.json", "eval", config_path, 0, inputs, outputs, eff,
                   seconds_since(start));
    return 0;
}

struct DiagnoseOpts {
    std::string ckpt;
    std::string vocab;
    std::string topics;
    std::string corpus;
    std::string out = "diagnostics.json";
    std::string export_path;
    int pairs = 5000;
    uint64_t seed = 7;
};

int do_diagnose(const DiagnoseOpts& o, const std::string& config_path) {
    auto start = Clock::now();
    TrainerCheckpoint ckpt = load_checkpoint(o.ckpt);
    Vocabulary vocab = load_vocabulary(o.vocab);
    HldaState topics = load_hlda(o.topics);
    check_staleness(ckpt, topics, vocab);

    auto docs = load_corpus(o.corpus);
    auto queries = encode_documents(ckpt.model, ckpt.prompts, docs, vocab, topics, Role::kQuery);
    auto passages =
        encode_documents(ckpt.model, ckpt.prompts, docs, vocab, topics, Role::kPassage);
    std::vector<std::vector<std::string>> cats;
    cats.reserve(docs.size());
    for (const auto& d : docs) cats.push_back(d.categories);

    DiagnosticsReport report = diagnostics_report(queries, cats, passages, cats, o.pairs, o.seed);
    save_diagnostics(report, o.out);
    log_info("alignment " + std::to_string(report.align_query_positive) + ", uniformity(q) " +
             std::to_string(report.uniform_queries) + ", uniformity(p) " +
             std::to_string(report.uniform_passages) + ", gap " +
             std::to_string(report.similarity.gap));

    std::vector<std::string> outputs{o.out};
    if (!o.export_path.empty()) {
        std::vector<Representation> all = queries;
        all.insert(all.end(), passages.begin(), passages.end());
        std::vector<std::string> labels;
        labels.reserve(all.size());
        for (size_t round = 0; round < 2; ++round) {
            for (const auto& d : docs) {
                int k = round == 0 ? queries[labels.size()].prompt_index
                                   : passages[labels.size() - docs.size()].prompt_index;
                labels.push_back(k >= 0 ? "prompt" + std::to_string(k)
                                        : (d.categories.empty() ? "none" : d.categories[0]));
            }
        }
        export_embeddings(all, labels, o.export_path);
        outputs.push_back(o.export_path);
    }

    json eff{{"ckpt", o.ckpt},     {"vocab", o.vocab},        {"topics", o.topics},
             {"corpus", o.corpus}, {"out", o.out},            {"export", o.export_path},
             {"pairs", o.pairs},   {"seed", o.seed}};
    write_manifest(o.out + ".manifest.json", "diagnose", config_path, o.seed,
                   {o.ckpt, o.vocab, o.topics, o.corpus}, outputs, eff, seconds_since(start));
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"topic-prompted dense retrieval laboratory"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read option defaults from an INI file");
    app.set_version_flag("--version", kVersion);

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    synth->add_option("--out", so.out, "output JSONL path");
    synth->add_option("--topics", so.topics, "number of planted topics");
    synth->add_option("--docs-per-topic", so.docs_per_topic, "documents per topic");
    synth->add_option("--vocab-size", so.vocab_size, "synthetic vocabulary size");
    synth->add_option("--doc-length", so.doc_length, "abstract length in tokens");
    synth->add_option("--overlap", so.overlap, "shared-pool probability mass");
    synth->add_option("--multi-fraction", so.multi_fraction,
                      "fraction of documents with a second category");
    synth->add_flag("--paraphrase", so.paraphrase,
                    "draw titles and abstracts from disjoint topic-word halves");
    synth->add_option("--seed", so.seed, "generation seed");

    IngestOpts io;
    CLI::App* ingest = app.add_subcommand("ingest", "validate, build vocabulary, split");
    ingest->add_option("--corpus", io.corpus, "input JSONL corpus")->required();
    ingest->add_option("--out-dir", io.out_dir, "output directory");
    ingest->add_option("--train-ratio", io.train_ratio, "train fraction");
    ingest->add_option("--dev-ratio", io.dev_ratio, "dev fraction");
    ingest->add_option("--test-ratio", io.test_ratio, "test fraction");
    ingest->add_option("--min-count", io.min_count, "vocabulary frequency cutoff");
    ingest->add_option("--seed", io.seed, "shuffle seed");

    TopicsOpts to;
    CLI::App* topics = app.add_subcommand("topics", "fit the topic hierarchy");
    topics->add_option("--corpus", to.corpus, "training JSONL corpus")->required();
    topics->add_option("--vocab", to.vocab, "vocabulary file")->required();
    topics->add_option("--out", to.out, "topic checkpoint path");
    topics->add_option("--report", to.report, "report path (default <out>.report.txt)");
    topics->add_option("--depth", to.depth, "tree depth");
    topics->add_option("--iters", to.iterations, "Gibbs sweeps");
    topics->add_option("--crp-gamma", to.crp_gamma, "branching concentration");
    topics->add_option("--alpha", to.alpha, "level-mixture smoothing");
    topics->add_option("--eta", to.eta, "topic-word smoothing");
    topics->add_option("--seed", to.seed, "sampler seed");

    TrainOpts tro;
    CLI::App* train_cmd = app.add_subcommand("train", "fine-tune the encoder and prompts");
    train_cmd->add_option("--train", tro.train_corpus, "training JSONL corpus")->required();
    train_cmd->add_option("--dev", tro.dev_corpus, "dev JSONL corpus (enables early stopping)");
    train_cmd->add_option("--vocab", tro.vocab, "vocabulary file")->required();
    train_cmd->add_option("--topics", tro.topics, "topic checkpoint")->required();
    train_cmd->add_option("--out", tro.out, "checkpoint directory");
    train_cmd->add_option("--mode", tro.mode, "topic_prompts | single_prompt | no_prompt");
    train_cmd->add_flag("--freeze-encoder", tro.freeze_encoder,
                        "train only prompt-side tensors");
    train_cmd->add_option("--batch-size", tro.batch_size, "documents per step");
    train_cmd->add_option("--epochs", tro.epochs, "training epochs");
    train_cmd->add_option("--max-steps", tro.max_steps, "global step cap (0 = none)");
    train_cmd->add_option("--lr", tro.learning_rate, "learning rate");
    train_cmd->add_option("--clip-norm", tro.clip_norm, "gradient clip norm (0 disables)");
    train_cmd->add_option("--seed", tro.seed, "training seed");
    train_cmd->add_option("--gamma", tro.gamma, "similarity temperature");
    train_cmd->add_option("--margin", tro.margin, "topic hinge margin");
    train_cmd->add_option("--alpha", tro.alpha, "loss mixing weight");
    train_cmd->add_option("--prompt-len", tro.prompt_len, "continuous prompt tokens");
    train_cmd->add_option("--topic-words", tro.topic_word_count, "words offered per prompt");
    train_cmd->add_option("--prompt-level", tro.prompt_level, "hierarchy level for prompts");
    train_cmd->add_option("--grid-budget", tro.topic_grid_budget,
                          "prompts x passages cap for the hinge term");
    train_cmd->add_option("--patience", tro.patience, "plateau evaluations before stopping");
    train_cmd->add_option("--eval-k", tro.eval_k, "dev MRR cutoff");
    train_cmd->add_option("--dim", tro.dim, "encoder width");
    train_cmd->add_option("--layers", tro.num_layers, "encoder layers");
    train_cmd->add_option("--heads", tro.heads, "attention heads");
    train_cmd->add_option("--ff-dim", tro.ff_dim, "feed-forward width");
    train_cmd->add_option("--max-len", tro.max_len, "sequence length cap");

    IndexOpts ixo;
    CLI::App* index_cmd = app.add_subcommand("index", "encode passages into a dense index");
    index_cmd->add_option("--ckpt", ixo.ckpt, "checkpoint directory")->required();
    index_cmd->add_option("--vocab", ixo.vocab, "vocabulary file")->required();
    index_cmd->add_option("--topics", ixo.topics, "topic checkpoint")->required();
    index_cmd->add_option("--corpus", ixo.corpus, "passage JSONL corpus")->required();
    index_cmd->add_option("--out", ixo.out, "index path");

    SearchOpts seo;
    CLI::App* search_cmd = app.add_subcommand("search", "run one query against an index");
    search_cmd->add_option("--index", seo.index, "dense index")->required();
    search_cmd->add_option("--ckpt", seo.ckpt, "checkpoint directory")->required();
    search_cmd->add_option("--vocab", seo.vocab, "vocabulary file")->required();
    search_cmd->add_option("--topics", seo.topics, "topic checkpoint")->required();
    search_cmd->add_option("--query", seo.query, "query text")->required();
    search_cmd->add_option("--out", seo.out, "ranked list TSV path");
    search_cmd->add_option("-k,--k", seo.k, "results to return");

    EvalOpts evo;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score ranked retrieval");
    eval_cmd->add_option("--queries", evo.queries, "query JSONL corpus")->required();
    eval_cmd->add_option("--index", evo.index, "dense index (dense engine)");
    eval_cmd->add_option("--ckpt", evo.ckpt, "checkpoint directory (dense engine)");
    eval_cmd->add_option("--vocab", evo.vocab, "vocabulary file (dense engine)");
    eval_cmd->add_option("--topics", evo.topics, "topic checkpoint (dense engine)");
    eval_cmd->add_option("--corpus", evo.corpus, "passage JSONL corpus (bm25 engine)");
    eval_cmd->add_option("--engine", evo.engine, "dense | bm25");
    eval_cmd->add_option("--out", evo.out, "metrics JSON path");
    eval_cmd->add_option("--ranked-out", evo.ranked_out, "optional ranked list TSV");
    eval_cmd->add_option("-k,--k", evo.k_values, "cutoffs")->delimiter(',');
    eval_cmd->add_flag("--filter-self", evo.filter_self,
                       "drop each query's own passage from its ranking");

    DiagnoseOpts dgo;
    CLI::App* diagnose = app.add_subcommand("diagnose", "embedding-space quality report");
    diagnose->add_option("--ckpt", dgo.ckpt, "checkpoint directory")->required();
    diagnose->add_option("--vocab", dgo.vocab, "vocabulary file")->required();
    diagnose->add_option("--topics", dgo.topics, "topic checkpoint")->required();
    diagnose->add_option("--corpus", dgo.corpus, "JSONL corpus to embed")->required();
    diagnose->add_option("--out", dgo.out, "report JSON path");
    diagnose->add_option("--export", dgo.export_path, "optional embedding TSV export");
    diagnose->add_option("--pairs", dgo.pairs, "similarity sample size per side");
    diagnose->add_option("--seed", dgo.seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const CLI::Option* config_opt = app.get_config_ptr();
    const std::string config_path =
        config_opt != nullptr && config_opt->count() > 0 ? config_opt->as<std::string>() : "";
    try {
        if (synth->parsed()) return do_synth(so, config_path);
        if (ingest->parsed()) return do_ingest(io, config_path);
        if (topics->parsed()) return do_topics(to, config_path);
        if (train_cmd->parsed()) return do_train(tro, config_path);
        if (index_cmd->parsed()) return do_index(ixo, config_path);
        if (search_cmd->parsed()) return do_search(seo, config_path);
        if (eval_cmd->parsed()) return do_eval(evo, config_path);
        if (diagnose->parsed()) return do_diagnose(dgo, config_path);
    } catch (const NumericError& e) {
        log_error(e.what());
        return 3;
    } catch (const DataError& e) {
        log_error(e.what());
        return 2;
    } catch (const std::exception& e) {
        log_error(e.what());
        return 2;
    }
    return 0;
}

}  // namespace topicdpr
