#include "segline/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "segline/error.hpp"
#include "segline/rng.hpp"

namespace segline {

using nlohmann::json;

const std::vector<std::string_view> kAbbreviations = {"e.g.", "i.e.", "Dr.", "St.", "vs.", "etc."};

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_upper_or_digit(unsigned char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

// Token that ends at (and includes) position end-1, without leading brackets
// or quotes.
std::string_view token_ending_at(std::string_view text, std::size_t end) {
    std::size_t b = end;
    while (b > 0 && !is_space(text[b - 1])) --b;
    while (b < end && (text[b] == '(' || text[b] == '[' || text[b] == '"' || text[b] == '\'')) ++b;
    return text.substr(b, end - b);
}

bool is_abbreviation(std::string_view token) {
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

void push_trimmed(std::string_view text, std::size_t begin, std::size_t end,
                  std::vector<ByteSpan>& out) {
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    if (begin < end) out.push_back({begin, end});
}

// Code point index of every byte offset (size text.size() + 1).
std::vector<std::size_t> code_point_offsets(std::string_view text) {
    std::vector<std::size_t> offsets(text.size() + 1);
    std::size_t cp = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        offsets[i] = cp;
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) ++cp;
    }
    offsets[text.size()] = cp;
    return offsets;
}

}  // namespace

// ---------------------------------------------------------------------------
// TopicVocab

TopicVocab::TopicVocab(std::vector<std::string> labels) {
    for (auto& l : labels) {
        if (index_.count(l)) throw ConfigError("duplicate topic label: " + l);
        intern(l);
    }
}

TopicId TopicVocab::intern(const std::string& name) {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    const auto id = static_cast<TopicId>(labels_.size());
    labels_.push_back(name);
    index_.emplace(name, id);
    return id;
}

std::optional<TopicId> TopicVocab::find(const std::string& name) const {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    return std::nullopt;
}

const std::string& TopicVocab::label(TopicId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
        throw ShapeError("topic id out of range: " + std::to_string(id));
    return labels_[static_cast<std::size_t>(id)];
}

json TopicVocab::to_json() const {
    return json{{"labels", labels_}};
}

TopicVocab TopicVocab::from_json(const json& j) {
    if (!j.is_object() || !j.contains("labels") || !j["labels"].is_array())
        throw ParseError("vocab: expected {\"labels\": [...]}");
    return TopicVocab(j["labels"].get<std::vector<std::string>>());
}

TopicVocab TopicVocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocab file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("vocab " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void TopicVocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write vocab file: " + path.string());
    out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Segmentation

Segmentation::Segmentation(std::size_t n_, std::vector<std::size_t> b) : n(n_), boundaries(std::move(b)) {
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
    if (!boundaries.empty() && boundaries.back() + 1 >= n)
        throw ShapeError("boundary " + std::to_string(boundaries.back()) + " out of range for n=" +
                         std::to_string(n));
}

// ---------------------------------------------------------------------------
// Sentence splitting

std::vector<ByteSpan> split_sentence_spans(std::string_view text) {
    std::vector<ByteSpan> spans;
    std::size_t start = 0;
    for (std::size_t p = 0; p + 1 < text.size(); ++p) {
        const char c = text[p];
        if (c != '.' && c != '!' && c != '?') continue;
        if (!is_space(text[p + 1])) continue;
        std::size_t q = p + 1;
        while (q < text.size() && is_space(text[q])) ++q;
        if (q == text.size() || !is_upper_or_digit(text[q])) continue;
        if (c == '.' && is_abbreviation(token_ending_at(text, p + 1))) continue;
        push_trimmed(text, start, p + 1, spans);
        start = q;
        p = q - 1;
    }
    push_trimmed(text, start, text.size(), spans);
    return spans;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& s : split_sentence_spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
    return out;
}

// ---------------------------------------------------------------------------
// WikiSection ingestion

std::optional<Document> convert_wikisection(const json& raw_doc, TopicVocab& vocab, std::string* reason) {
    auto reject = [&](std::string why) -> std::optional<Document> {
        if (reason) *reason = std::move(why);
        return std::nullopt;
    };
    if (!raw_doc.is_object()) return reject("record is not a JSON object");
    if (!raw_doc.contains("text") || !raw_doc["text"].is_string()) return reject("missing text field");
    if (!raw_doc.contains("annotations") || !raw_doc["annotations"].is_array() ||
        raw_doc["annotations"].empty())
        return reject("missing or empty annotations");

    struct Annotation {
        double begin;
        double end;
        std::string label;
    };
    std::vector<Annotation> annotations;
    for (const auto& a : raw_doc["annotations"]) {
        if (!a.is_object() || !a.contains("begin") || !a.contains("length") || !a["begin"].is_number() ||
            !a["length"].is_number())
            return reject("annotation without numeric begin/length");
        std::string label;
        if (a.contains("sectionLabel") && a["sectionLabel"].is_string())
            label = a["sectionLabel"].get<std::string>();
        else if (a.contains("label") && a["label"].is_string())
            label = a["label"].get<std::string>();
        else
            return reject("annotation without sectionLabel");
        const double begin = a["begin"].get<double>();
        annotations.push_back({begin, begin + a["length"].get<double>(), std::move(label)});
    }

    Document doc;
    if (raw_doc.contains("id") && raw_doc["id"].is_string())
        doc.doc_id = raw_doc["id"].get<std::string>();
    else if (raw_doc.contains("title") && raw_doc["title"].is_string())
        doc.doc_id = raw_doc["title"].get<std::string>();

    const std::string& text = raw_doc["text"].get_ref<const std::string&>();
    const auto cp = code_point_offsets(text);
    for (const auto& span : split_sentence_spans(text)) {
        const double mid = 0.5 * static_cast<double>(cp[span.begin] + cp[span.end]);
        const auto hit = std::find_if(annotations.begin(), annotations.end(),
                                      [mid](const Annotation& a) { return a.begin <= mid && mid < a.end; });
        if (hit == annotations.end()) continue;
        Sentence s;
        s.sid = doc.sentences.size();
        s.text = text.substr(span.begin, span.end - span.begin);
        s.topic_id = vocab.intern(hit->label);
        doc.sentences.push_back(std::move(s));
    }
    if (doc.sentences.empty()) return reject("no sentence falls inside an annotation");
    return doc;
}

// ---------------------------------------------------------------------------

Segmentation derive_gold(const Document& doc) {
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i + 1 < doc.size(); ++i)
        if (doc.topic(i) != doc.topic(i + 1)) b.push_back(i);
    return Segmentation(doc.size(), std::move(b));
}

CorpusSplit split_corpus(const std::vector<Document>& corpus, const SplitRatios& ratios, std::uint64_t seed) {
    if (corpus.empty()) throw ConfigError("split_corpus: empty corpus");
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must be nonnegative and sum to 1");

    const std::size_t n = corpus.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(std::span(order), rng);

    const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
    const std::size_t n_train = n - n_valid - n_test;

    CorpusSplit split;
    for (std::size_t r = 0; r < n; ++r) {
        const Document& d = corpus[order[r]];
        if (r < n_train)
            split.train.push_back(d);
        else if (r < n_train + n_valid)
            split.valid.push_back(d);
        else
            split.test.push_back(d);
    }
    return split;
}

void renumber_sids(std::vector<Document>& docs) {
    std::size_t sid = 0;
    for (auto& d : docs)
        for (auto& s : d.sentences) s.sid = sid++;
}

std::size_t sentence_count(const std::vector<Document>& docs) {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.size();
    return n;
}

// ---------------------------------------------------------------------------
// JSONL

void write_document_jsonl(std::ostream& out, const Document& doc, const TopicVocab& vocab) {
    json sentences = json::array();
    for (const auto& s : doc.sentences) sentences.push_back({{"text", s.text}, {"topic", vocab.label(s.topic_id)}});
    out << json{{"doc_id", doc.doc_id}, {"sentences", std::move(sentences)}}.dump() << '\n';
}

void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs,
                        const TopicVocab& vocab) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write corpus: " + path.string());
    for (const auto& d : docs) write_document_jsonl(out, d, vocab);
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<Document> read_corpus_jsonl(std::istream& in, TopicVocab& vocab) {
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    std::size_t sid = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto where = "corpus line " + std::to_string(line_no) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + e.what());
        }
        if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string() || !j.contains("sentences") ||
            !j["sentences"].is_array())
            throw ParseError(where + "expected {\"doc_id\": string, \"sentences\": [...]}");
        Document doc;
        doc.doc_id = j["doc_id"].get<std::string>();
        for (const auto& s : j["sentences"]) {
            if (!s.is_object() || !s.contains("text") || !s["text"].is_string() || !s.contains("topic") ||
                !s["topic"].is_string())
                throw ParseError(where + "sentence needs string text and topic");
            Sentence sentence;
            sentence.sid = sid++;
            sentence.text = s["text"].get<std::string>();
            if (trim(sentence.text).empty()) throw ParseError(where + "empty sentence text");
            sentence.topic_id = vocab.intern(s["topic"].get<std::string>());
            doc.sentences.push_back(std::move(sentence));
        }
        if (doc.sentences.empty()) throw ParseError(where + "document has no sentences");
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Document> read_corpus_jsonl(const std::filesystem::path& path, TopicVocab& vocab) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus: " + path.string());
    return read_corpus_jsonl(in, vocab);
}

}  // namespace segline
