#include "segline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "segline/error.hpp"
#include "segline/rng.hpp"

namespace segline {

namespace {

const std::vector<std::string> kTopicNames = {"history",   "geography", "climate",   "economy",
                                              "culture",   "transport", "education", "sports",
                                              "politics",  "religion",  "media",     "tourism"};

const std::vector<std::string> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
const std::vector<std::string> kNuclei = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string pseudo_word(Rng& rng) {
    const std::size_t syllables = 2 + uniform_index(rng, 2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[uniform_index(rng, kOnsets.size())];
        w += kNuclei[uniform_index(rng, kNuclei.size())];
    }
    return w;
}

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + uniform_index(rng, hi - lo + 1);
}

struct TopicLexicon {
    std::vector<std::string> words;
    std::vector<double> cumulative;  // Zipf CDF over words
};

std::string draw_word(const TopicLexicon& lex, Rng& rng) {
    const double r = uniform_unit(rng) * lex.cumulative.back();
    const auto it = std::upper_bound(lex.cumulative.begin(), lex.cumulative.end(), r);
    return lex.words[std::min<std::size_t>(static_cast<std::size_t>(it - lex.cumulative.begin()),
                                           lex.words.size() - 1)];
}

}  // namespace

void SynthConfig::validate() const {
    if (num_docs == 0 || topics < 2 || words_per_topic == 0) throw ConfigError("synth: need docs, >= 2 topics, words");
    if (min_sentences < 1 || min_sentences > max_sentences) throw ConfigError("synth: bad sentence range");
    if (min_segments < 1 || min_segments > max_segments) throw ConfigError("synth: bad segment range");
    if (min_segments > min_sentences) throw ConfigError("synth: min_segments exceeds min_sentences");
    if (min_words < 1 || min_words > max_words) throw ConfigError("synth: bad word range");
    if (!(shared_fraction >= 0.0 && shared_fraction < 1.0)) throw ConfigError("synth: shared_fraction in [0, 1)");
}

SynthCorpus generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(splitmix64(config.seed ^ 0x5e9111e5ULL));

    const auto shared_count = static_cast<std::size_t>(
        std::lround(config.shared_fraction * static_cast<double>(config.words_per_topic)));
    const std::size_t own_count = config.words_per_topic - shared_count;

    std::set<std::string> used;
    auto fresh_word = [&] {
        for (;;) {
            auto w = pseudo_word(rng);
            if (used.insert(w).second) return w;
        }
    };
    std::vector<std::string> shared_pool;
    for (std::size_t i = 0; i < shared_count; ++i) shared_pool.push_back(fresh_word());

    SynthCorpus out;
    std::vector<TopicLexicon> lexicons(config.topics);
    for (std::size_t t = 0; t < config.topics; ++t) {
        out.vocab.intern(t < kTopicNames.size() ? kTopicNames[t] : "topic" + std::to_string(t));
        auto& lex = lexicons[t];
        lex.words = shared_pool;
        for (std::size_t i = 0; i < own_count; ++i) lex.words.push_back(fresh_word());
        shuffle(std::span(lex.words), rng);  // random Zipf rank per topic
        double acc = 0.0;
        for (std::size_t r = 0; r < lex.words.size(); ++r) {
            acc += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
            lex.cumulative.push_back(acc);
        }
    }

    std::size_t sid = 0;
    const std::size_t width = std::to_string(config.num_docs - 1).size();
    for (std::size_t d = 0; d < config.num_docs; ++d) {
        Document doc;
        auto num = std::to_string(d);
        doc.doc_id = "synth-" + std::string(width - num.size(), '0') + num;

        const std::size_t n = uniform_between(rng, config.min_sentences, config.max_sentences);
        const std::size_t segments = uniform_between(rng, config.min_segments, std::min(config.max_segments, n));
        std::vector<std::size_t> cuts(n - 1);
        std::iota(cuts.begin(), cuts.end(), 1);
        shuffle(std::span(cuts), rng);
        cuts.resize(segments - 1);
        std::sort(cuts.begin(), cuts.end());
        cuts.push_back(n);

        std::size_t topic = uniform_index(rng, config.topics);
        std::size_t start = 0;
        for (std::size_t s = 0; s < segments; ++s) {
            if (s > 0) topic = (topic + 1 + uniform_index(rng, config.topics - 1)) % config.topics;
            for (std::size_t i = start; i < cuts[s]; ++i) {
                const std::size_t len = uniform_between(rng, config.min_words, config.max_words);
                std::string text;
                for (std::size_t w = 0; w < len; ++w) {
                    auto word = draw_word(lexicons[topic], rng);
                    if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
                    if (w > 0) text += ' ';
                    text += word;
                }
                text += '.';
                doc.sentences.push_back({sid++, std::move(text), static_cast<TopicId>(topic)});
            }
            start = cuts[s];
        }
        out.docs.push_back(std::move(doc));
    }
    return out;
}

}  // namespace segline
