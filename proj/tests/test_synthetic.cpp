#include <doctest.h>

#include <map>
#include <set>

#include "segline/corpus.hpp"
#include "segline/embedder.hpp"
#include "segline/error.hpp"
#include "segline/synthetic.hpp"

using namespace segline;

namespace {

// Words used by each topic across the corpus.
std::map<TopicId, std::set<std::string>> topic_words(const SynthCorpus& c) {
    std::map<TopicId, std::set<std::string>> words;
    for (const auto& d : c.docs)
        for (const auto& s : d.sentences)
            for (const auto& w : tokenize(s.text)) words[s.topic_id].insert(w);
    return words;
}

}  // namespace

TEST_CASE("synthetic corpus shape") {
    SynthConfig cfg;
    cfg.num_docs = 60;
    cfg.seed = 2;
    const auto c = generate_synthetic(cfg);
    REQUIRE(c.docs.size() == 60);
    CHECK(c.vocab.size() == 6);
    std::size_t sid = 0;
    std::set<std::string> ids;
    for (const auto& d : c.docs) {
        CHECK(ids.insert(d.doc_id).second);
        CHECK(d.size() >= 8);
        CHECK(d.size() <= 20);
        const auto gold = derive_gold(d);
        CHECK(gold.segment_count() >= 2);
        CHECK(gold.segment_count() <= 4);
        for (const auto& s : d.sentences) {
            CHECK(s.sid == sid++);
            const auto words = tokenize(s.text);
            CHECK(words.size() >= 8);
            CHECK(words.size() <= 14);
        }
        CHECK(split_sentences(d.sentences[0].text).size() == 1);
    }

    const auto again = generate_synthetic(cfg);
    for (std::size_t d = 0; d < c.docs.size(); ++d)
        for (std::size_t i = 0; i < c.docs[d].size(); ++i)
            CHECK(again.docs[d].sentences[i].text == c.docs[d].sentences[i].text);
}

TEST_CASE("topic vocabularies are disjoint unless sharing is requested") {
    SynthConfig cfg;
    cfg.num_docs = 80;
    const auto words = topic_words(generate_synthetic(cfg));
    for (const auto& [a, wa] : words) {
        CHECK(wa.size() <= 30);
        for (const auto& [b, wb] : words) {
            if (a >= b) continue;
            for (const auto& w : wa) CHECK(wb.count(w) == 0);
        }
    }

    cfg.shared_fraction = 0.2;
    const auto shared = topic_words(generate_synthetic(cfg));
    std::set<std::string> common = shared.begin()->second;
    for (const auto& [t, w] : shared) {
        std::set<std::string> keep;
        for (const auto& x : common)
            if (w.count(x)) keep.insert(x);
        common = keep;
    }
    CHECK(common.size() >= 1);
    CHECK(common.size() <= 6);  // round(0.2 * 30)
}

TEST_CASE("synthetic config validation") {
    SynthConfig cfg;
    cfg.topics = 1;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg = {};
    cfg.min_segments = 9;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    cfg = {};
    cfg.shared_fraction = 1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}
