#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "segline/corpus.hpp"
#include "segline/rng.hpp"

namespace segline {

enum class PairKind { natural, positive, same_topic_far, other_topic };

// A labelled sentence pair from one document. i and j index the document;
// sid_i and sid_j are the global sentence ids (embedding rows).
struct PairExample {
    std::string doc_id;
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t sid_i = 0;
    std::size_t sid_j = 0;
    int stp_label = 0;  // 1 = same topic
    int nsp_label = 0;  // 1 = j == i + 1
    TopicId topic_i = 0;
    TopicId topic_j = 0;
    PairKind kind = PairKind::natural;

    bool operator==(const PairExample&) const = default;
};

// Builds the example for (i, j) with labels derived from positions and topics.
PairExample make_pair(const Document& doc, std::size_t i, std::size_t j, PairKind kind);

// (i, i+1) for every adjacent pair.
std::vector<PairExample> natural_pairs(const Document& doc);

// Up to three pairs anchored at sentence i:
//   positive        (i, i+1) when sentence i+1 shares the anchor's topic;
//   same_topic_far  (i, k), topic_k == topic_i, k not in {i-1, i, i+1};
//   other_topic     (i, l), topic_l != topic_i, l != i+1.
// k and l are drawn uniformly from their candidate sets; empty sets are skipped.
std::vector<PairExample> consecutive_sample(const Document& doc, std::size_t i, Rng& rng);

// Natural pairs plus consecutive samples for every anchor of every document,
// deduplicated on (doc_id, i, j) and shuffled. Each document draws from its
// own stream derived from (seed, doc_id).
std::vector<PairExample> build_training_set(const std::vector<Document>& docs, std::uint64_t seed);

// {"doc_id", "i", "j", "stp", "nsp", "ti", "tj"} per line.
void write_pairs_jsonl(std::ostream& out, const std::vector<PairExample>& pairs);
// Resolves sids against docs; throws ParseError on unknown doc ids or ranges.
std::vector<PairExample> read_pairs_jsonl(std::istream& in, const std::vector<Document>& docs);

}  // namespace segline
