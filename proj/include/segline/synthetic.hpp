#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "segline/corpus.hpp"

namespace segline {

// Generator for labelled toy corpora. Every topic owns words_per_topic
// pseudo-words; shared_fraction of them come from a pool common to all
// topics. Words are drawn with Zipf weights over a per-topic random ranking.
struct SynthConfig {
    std::size_t num_docs = 200;
    std::size_t min_sentences = 8;
    std::size_t max_sentences = 20;
    std::size_t topics = 6;
    std::size_t words_per_topic = 30;
    std::size_t min_segments = 2;
    std::size_t max_segments = 4;
    std::size_t min_words = 8;
    std::size_t max_words = 14;
    double shared_fraction = 0.0;
    double zipf_exponent = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthCorpus {
    std::vector<Document> docs;
    TopicVocab vocab;
};

// Adjacent segments always have different topics. Sids are contiguous.
SynthCorpus generate_synthetic(const SynthConfig& config);

}  // namespace segline
