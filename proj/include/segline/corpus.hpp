#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace segline {

using TopicId = std::int32_t;

// Dense 0-based ids for topic names, in first-seen order.
class TopicVocab {
public:
    TopicVocab() = default;
    explicit TopicVocab(std::vector<std::string> labels);

    // Returns the id for name, appending it if unseen.
    TopicId intern(const std::string& name);
    std::optional<TopicId> find(const std::string& name) const;
    const std::string& label(TopicId id) const;

    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

    nlohmann::json to_json() const;
    static TopicVocab from_json(const nlohmann::json& j);
    static TopicVocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, TopicId> index_;
};

struct Sentence {
    std::size_t sid = 0;
    std::string text;
    TopicId topic_id = 0;
};

struct Document {
    std::string doc_id;
    std::vector<Sentence> sentences;

    std::size_t size() const { return sentences.size(); }
    TopicId topic(std::size_t i) const { return sentences[i].topic_id; }
};

// Boundary b means "boundary between sentence b and sentence b+1". Boundaries
// are kept sorted and unique.
struct Segmentation {
    std::size_t n = 0;
    std::vector<std::size_t> boundaries;

    Segmentation() = default;
    // Sorts, deduplicates and range-checks; throws ShapeError on b >= n-1.
    Segmentation(std::size_t n, std::vector<std::size_t> boundaries);

    std::size_t segment_count() const { return n == 0 ? 0 : boundaries.size() + 1; }
    bool operator==(const Segmentation&) const = default;
};

struct CorpusSplit {
    std::vector<Document> train;
    std::vector<Document> valid;
    std::vector<Document> test;
};

struct SplitRatios {
    double train = 0.7;
    double valid = 0.1;
    double test = 0.2;
};

// Rule-based splitter. A sentence ends after '.', '!' or '?' when followed by
// whitespace and then an ASCII uppercase letter or digit, unless the token
// ending there is one of kAbbreviations. Pieces are whitespace-trimmed.
std::vector<std::string> split_sentences(std::string_view text);

struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
};

// Same rule as split_sentences, reported as trimmed byte spans into text.
std::vector<ByteSpan> split_sentence_spans(std::string_view text);

extern const std::vector<std::string_view> kAbbreviations;

// Converts one WikiSection record ({"text", "annotations": [{"begin",
// "length", "sectionLabel"}]}). Offsets count Unicode code points. Each
// sentence takes the label of the annotation containing its midpoint;
// sentences outside every annotation are dropped. Unseen labels are appended
// to vocab. Returns nullopt (with the reason in *reason) for rejected records.
std::optional<Document> convert_wikisection(const nlohmann::json& raw_doc, TopicVocab& vocab,
                                            std::string* reason = nullptr);

Segmentation derive_gold(const Document& doc);

// Seeded shuffle, then contiguous partition with floor(ratio * N) documents
// for valid and test; the remainder goes to train.
CorpusSplit split_corpus(const std::vector<Document>& corpus, const SplitRatios& ratios,
                         std::uint64_t seed);

// Assigns contiguous sids 0..N-1 in document order.
void renumber_sids(std::vector<Document>& docs);

std::size_t sentence_count(const std::vector<Document>& docs);

// Canonical JSONL: {"doc_id": ..., "sentences": [{"text": ..., "topic": ...}]}.
void write_document_jsonl(std::ostream& out, const Document& doc, const TopicVocab& vocab);
void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs,
                        const TopicVocab& vocab);
// Reads a corpus, interning topics into vocab and assigning sids in file order.
std::vector<Document> read_corpus_jsonl(std::istream& in, TopicVocab& vocab);
std::vector<Document> read_corpus_jsonl(const std::filesystem::path& path, TopicVocab& vocab);

}  // namespace segline
