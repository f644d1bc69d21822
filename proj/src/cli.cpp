#include "segline/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "segline/corpus.hpp"
#include "segline/embedder.hpp"
#include "segline/error.hpp"
#include "segline/metrics.hpp"
#include "segline/sampler.hpp"
#include "segline/segmenter.hpp"
#include "segline/synthetic.hpp"
#include "segline/trainer.hpp"

namespace segline::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_logger() {
    static const bool once = [] {
        auto logger = spdlog::get("segline");
        if (!logger) logger = spdlog::stderr_color_mt("segline");
        spdlog::set_default_logger(logger);
        spdlog::set_pattern("[%l] %v");
        return true;
    }();
    (void)once;
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed: " + path.string());
}

// Raw WikiSection input: a JSON array of records, a single record, or JSONL.
std::vector<json> read_wikisection_records(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    try {
        auto j = json::parse(content);
        if (j.is_array()) return j.get<std::vector<json>>();
        return {std::move(j)};
    } catch (const json::parse_error&) {
    }
    std::vector<json> records;
    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

struct LoadedCorpus {
    std::vector<Document> docs;
    TopicVocab vocab;
};

LoadedCorpus load_corpus(const fs::path& corpus, const std::string& vocab_path) {
    require_file(corpus, "corpus");
    LoadedCorpus c;
    if (!vocab_path.empty()) c.vocab = TopicVocab::load(vocab_path);
    c.docs = read_corpus_jsonl(corpus, c.vocab);
    if (c.docs.empty()) throw ConfigError("corpus is empty: " + corpus.string());
    return c;
}

EmbeddingMatrix load_corpus_embeddings(const fs::path& emb, const std::string& manifest, const LoadedCorpus& c) {
    require_file(emb, "embedding file");
    std::optional<fs::path> manifest_path;
    if (!manifest.empty()) manifest_path = manifest;
    EmbedderConfig cfg;
    cfg.kind = EmbedderKind::file;
    cfg.path = emb;
    cfg.manifest_path = manifest_path;
    cfg.dim = load_embeddings(emb, manifest_path).dim();
    return embed_corpus(c.docs, cfg);
}

std::vector<Document> select_split(const std::vector<Document>& docs, const std::string& which,
                                   const TrainConfig& config) {
    if (which == "all") return docs;
    auto split = split_corpus(docs, config.split, config.split_seed);
    if (which == "train") return split.train;
    if (which == "valid") return split.valid;
    if (which == "test") return split.test;
    throw ConfigError("unknown split: " + which);
}

// ---------------------------------------------------------------------------

int cmd_convert(const std::string& input, const std::string& out, const std::string& vocab_path) {
    require_file(input, "input");
    const auto records = read_wikisection_records(input);
    TopicVocab vocab;
    std::vector<Document> docs;
    std::size_t rejected = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        std::string reason;
        auto doc = convert_wikisection(records[r], vocab, &reason);
        if (!doc) {
            ++rejected;
            spdlog::warn("skipping record {}: {}", r, reason);
            continue;
        }
        if (doc->doc_id.empty()) doc->doc_id = "doc-" + std::to_string(r);
        docs.push_back(std::move(*doc));
    }
    renumber_sids(docs);
    write_corpus_jsonl(out, docs, vocab);
    if (!vocab_path.empty()) vocab.save(vocab_path);
    spdlog::info("converted {} documents ({} rejected), {} sentences, {} topics", docs.size(), rejected,
                 sentence_count(docs), vocab.size());
    if (records.empty() || 2 * rejected > records.size()) {
        spdlog::error("rejected {} of {} records", rejected, records.size());
        return kExitFailure;
    }
    return kExitOk;
}

struct EmbedArgs {
    std::string corpus;
    std::string mode = "hash";
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    bool no_normalize = false;
    std::string out;
    std::string manifest;
    std::string input;
    std::string input_manifest;
    std::string vocab;
};

int cmd_embed(const EmbedArgs& a) {
    const auto corpus = load_corpus(a.corpus, a.vocab);
    EmbedderConfig cfg;
    cfg.dim = a.dim;
    cfg.seed = a.seed;
    cfg.normalize = !a.no_normalize;
    if (a.mode == "hash") {
        cfg.kind = EmbedderKind::hash;
        if (a.out.empty()) throw ConfigError("--out is required in hash mode");
    } else if (a.mode == "file") {
        cfg.kind = EmbedderKind::file;
        if (a.input.empty()) throw ConfigError("--input is required in file mode");
        require_file(a.input, "embedding file");
        cfg.path = a.input;
        if (!a.input_manifest.empty()) cfg.manifest_path = a.input_manifest;
    } else {
        throw ConfigError("unknown --mode " + a.mode + " (expected hash or file)");
    }

    const auto m = embed_corpus(corpus.docs, cfg);
    if (!a.out.empty()) {
        write_embeddings(a.out, m);
        write_manifest(a.manifest.empty() ? a.out + ".manifest.jsonl" : a.manifest, make_manifest(corpus.docs));
    }
    spdlog::info("embeddings: n={} d={} normalized={}", m.rows(), m.dim(), m.normalized());
    return kExitOk;
}

struct TrainArgs {
    std::string config;
    std::string corpus;
    std::string emb;
    std::string manifest;
    std::string vocab;
    std::string out;
    std::string log;
    std::vector<double> weights;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig config;
    if (!a.config.empty()) {
        require_file(a.config, "config");
        std::ifstream in(a.config);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config " + a.config + ": " + e.what());
        }
        config = TrainConfig::from_json(j);
    }
    if (!a.weights.empty()) {
        if (a.weights.size() != 3) throw ConfigError("--weights expects stp,tc,nsp");
        config.weights = {a.weights[0], a.weights[1], a.weights[2]};
        config.validate();
    }

    const auto corpus = load_corpus(a.corpus, a.vocab);
    const auto emb = load_corpus_embeddings(a.emb, a.manifest, corpus);
    const auto split = split_corpus(corpus.docs, config.split, config.split_seed);
    const auto pairs = build_training_set(split.train, config.seed);
    spdlog::info("training on {} pairs from {} documents; {} validation documents; config {}", pairs.size(),
                 split.train.size(), split.valid.size(), config.hash());
    if (config.lr_schedule == LrSchedule::linear_decay)
        spdlog::info("lr schedule: linear decay from {} to {} (decay to 10% is a reconstructed default)", config.lr0,
                     0.1 * config.lr0);

    const auto result = train(config, pairs, split.valid, emb, corpus.vocab.size());
    save_checkpoint(a.out, result.best);
    if (!a.log.empty()) write_training_log(a.log, result.history);
    spdlog::info("best epoch {} with validation Pk {:.4f}", result.best.epoch, result.best.validation_pk);
    return kExitOk;
}

struct SegmentArgs {
    std::string ckpt;
    std::string corpus;
    std::string emb;
    std::string manifest;
    std::string vocab;
    std::string mode = "stp";
    std::string split = "all";
    std::string out;
};

int cmd_segment(const SegmentArgs& a) {
    require_file(a.ckpt, "checkpoint");
    const auto ckpt = load_checkpoint(a.ckpt);
    const auto mode = parse_segment_mode(a.mode);
    const auto corpus = load_corpus(a.corpus, a.vocab);
    const auto emb = load_corpus_embeddings(a.emb, a.manifest, corpus);
    if (emb.dim() != ckpt.params.dim())
        throw ConfigError("checkpoint expects d=" + std::to_string(ckpt.params.dim()) + ", embeddings have d=" +
                          std::to_string(emb.dim()));
    const auto config = ckpt.config.empty() ? TrainConfig{} : TrainConfig::from_json(ckpt.config);
    const auto docs = select_split(corpus.docs, a.split, config);
    const auto segs = segment_all(ckpt.params, docs, emb, mode);
    std::vector<SegmentRecord> records;
    for (std::size_t d = 0; d < docs.size(); ++d) records.push_back({docs[d].doc_id, segs[d]});
    write_segments(a.out, records);
    spdlog::info("segmented {} documents ({} mode)", docs.size(), to_string(mode));
    return kExitOk;
}

struct EvalArgs {
    std::string gold;
    std::string pred;
    std::string out;
    std::string ckpt;
    std::string emb;
    std::string manifest;
    std::string vocab;
};

int cmd_eval(const EvalArgs& a) {
    const auto corpus = load_corpus(a.gold, a.vocab);
    require_file(a.pred, "predictions");
    const auto records = read_segments(a.pred);
    if (records.empty()) throw ConfigError("no predictions in " + a.pred);

    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : corpus.docs) by_id.emplace(d.doc_id, &d);
    std::vector<const Document*> docs;
    std::vector<Segmentation> gold;
    std::vector<Segmentation> hyp;
    for (const auto& r : records) {
        const auto it = by_id.find(r.doc_id);
        if (it == by_id.end()) throw ConfigError("prediction for unknown doc_id " + r.doc_id);
        if (r.segmentation.n != it->second->size())
            throw ShapeError("prediction for " + r.doc_id + " covers " + std::to_string(r.segmentation.n) +
                             " sentences, gold has " + std::to_string(it->second->size()));
        docs.push_back(it->second);
        gold.push_back(derive_gold(*it->second));
        hyp.push_back(r.segmentation);
    }
    auto report = evaluate(gold, hyp);

    if (!a.ckpt.empty()) {
        if (a.emb.empty()) throw ConfigError("--ckpt needs --emb for per-head F1");
        require_file(a.ckpt, "checkpoint");
        const auto ckpt = load_checkpoint(a.ckpt);
        const auto emb = load_corpus_embeddings(a.emb, a.manifest, corpus);
        std::vector<int> tc_pred, tc_gold, nsp_pred, nsp_gold;
        for (const Document* doc : docs) {
            for (const auto& s : doc->sentences) {
                tc_pred.push_back(static_cast<int>(argmax(topic_logits(ckpt.params, emb.at_sid(s.sid)))));
                tc_gold.push_back(s.topic_id);
            }
            for (const auto& p : natural_pairs(*doc)) {
                nsp_pred.push_back(predict(ckpt.params, emb.at_sid(p.sid_i), emb.at_sid(p.sid_j)).nsp);
                nsp_gold.push_back(p.nsp_label);
            }
        }
        report.f1_tc = micro_f1(tc_pred, tc_gold);
        if (!nsp_gold.empty()) report.f1_nsp = micro_f1(nsp_pred, nsp_gold);
    }

    const auto j = report.to_json();
    if (a.out.empty())
        std::cout << j.dump(2) << '\n';
    else
        write_json(a.out, j);
    spdlog::info("pk {:.4f} windowdiff {:.4f} k {} over {} documents", report.pk, report.windowdiff, report.k_used,
                 report.docs);
    return kExitOk;
}

struct SynthArgs {
    SynthConfig config;
    std::string out;
    std::string vocab;
};

int cmd_synth(const SynthArgs& a) {
    const auto corpus = generate_synthetic(a.config);
    write_corpus_jsonl(a.out, corpus.docs, corpus.vocab);
    if (!a.vocab.empty()) corpus.vocab.save(a.vocab);
    spdlog::info("wrote {} documents, {} sentences", corpus.docs.size(), sentence_count(corpus.docs));
    return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
    ensure_logger();
    CLI::App app{"segline: sentence-pair topic segmentation"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    std::string c_input, c_out, c_vocab;
    auto* convert = app.add_subcommand("convert", "Convert WikiSection JSON to the canonical JSONL corpus");
    convert->add_option("--input", c_input, "WikiSection JSON (array, object or JSONL)")->required();
    convert->add_option("--out", c_out, "Output corpus JSONL")->required();
    convert->add_option("--vocab", c_vocab, "Write the topic vocabulary here");

    EmbedArgs e;
    auto* embed = app.add_subcommand("embed", "Embed a corpus into a SEGEMB1 file");
    embed->add_option("--corpus", e.corpus, "Corpus JSONL")->required();
    embed->add_option("--mode", e.mode, "hash | file")->capture_default_str();
    embed->add_option("--d", e.dim, "Embedding dimension (hash mode)")->capture_default_str();
    embed->add_option("--seed", e.seed, "Hash seed")->capture_default_str();
    embed->add_flag("--no-normalize", e.no_normalize, "Keep raw signed counts");
    embed->add_option("--out", e.out, "Output SEGEMB1 file");
    embed->add_option("--manifest", e.manifest, "Output manifest (default: <out>.manifest.jsonl)");
    embed->add_option("--input", e.input, "Existing SEGEMB1 file to validate (file mode)");
    embed->add_option("--input-manifest", e.input_manifest, "Manifest of --input");
    embed->add_option("--vocab", e.vocab, "Topic vocabulary JSON");

    TrainArgs t;
    auto* trainc = app.add_subcommand("train", "Train the pair classifier");
    trainc->add_option("--config", t.config, "Train config JSON (defaults when omitted)");
    trainc->add_option("--corpus", t.corpus, "Corpus JSONL")->required();
    trainc->add_option("--emb", t.emb, "SEGEMB1 embeddings for the corpus")->required();
    trainc->add_option("--manifest", t.manifest, "Manifest of --emb");
    trainc->add_option("--vocab", t.vocab, "Topic vocabulary JSON");
    trainc->add_option("--out", t.out, "Output checkpoint")->required();
    trainc->add_option("--log", t.log, "Per-epoch JSONL log");
    trainc->add_option("--weights", t.weights, "Loss weights stp,tc,nsp (e.g. 4,1,4)")->delimiter(',');

    SegmentArgs s;
    auto* segc = app.add_subcommand("segment", "Segment documents with a checkpoint");
    segc->add_option("--ckpt", s.ckpt, "Checkpoint")->required();
    segc->add_option("--corpus", s.corpus, "Corpus JSONL")->required();
    segc->add_option("--emb", s.emb, "SEGEMB1 embeddings for the corpus")->required();
    segc->add_option("--manifest", s.manifest, "Manifest of --emb");
    segc->add_option("--vocab", s.vocab, "Topic vocabulary JSON");
    segc->add_option("--mode", s.mode, "stp | tc_only")->capture_default_str();
    segc->add_option("--split", s.split, "all | train | valid | test (split stored in the checkpoint)")
        ->capture_default_str();
    segc->add_option("--out", s.out, "Output segments JSONL")->required();

    EvalArgs v;
    auto* evalc = app.add_subcommand("eval", "Score predicted segments against gold topics");
    evalc->add_option("--gold", v.gold, "Gold corpus JSONL")->required();
    evalc->add_option("--pred", v.pred, "Predicted segments JSONL")->required();
    evalc->add_option("--out", v.out, "Report JSON (stdout when omitted)");
    evalc->add_option("--ckpt", v.ckpt, "Checkpoint, for TC and NSP F1");
    evalc->add_option("--emb", v.emb, "Embeddings of the gold corpus, for TC and NSP F1");
    evalc->add_option("--manifest", v.manifest, "Manifest of --emb");
    evalc->add_option("--vocab", v.vocab, "Topic vocabulary JSON");

    SynthArgs y;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
    synth->add_option("--out", y.out, "Output corpus JSONL")->required();
    synth->add_option("--vocab", y.vocab, "Write the topic vocabulary here");
    synth->add_option("--docs", y.config.num_docs, "Number of documents")->capture_default_str();
    synth->add_option("--topics", y.config.topics, "Number of topics")->capture_default_str();
    synth->add_option("--words-per-topic", y.config.words_per_topic, "Topic vocabulary size")->capture_default_str();
    synth->add_option("--shared", y.config.shared_fraction, "Fraction of each topic's words shared by all topics")
        ->capture_default_str();
    synth->add_option("--seed", y.config.seed, "Generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*convert) return cmd_convert(c_input, c_out, c_vocab);
        if (*embed) return cmd_embed(e);
        if (*trainc) return cmd_train(t);
        if (*segc) return cmd_segment(s);
        if (*evalc) return cmd_eval(v);
        if (*synth) return cmd_synth(y);
    } catch (const ConfigError& err) {
        spdlog::error("{}", err.what());
        return kExitUsage;
    } catch (const EmbeddingLoadError& err) {
        spdlog::error("{}", err.what());
        return err.kind() == EmbeddingLoadError::Kind::io ? kExitUsage : kExitFailure;
    } catch (const std::exception& err) {
        spdlog::error("{}", err.what());
        return kExitFailure;
    }
    return kExitUsage;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("segline");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    return run(static_cast<int>(storage.size()), argv.data());
}

}  // namespace segline::cli
