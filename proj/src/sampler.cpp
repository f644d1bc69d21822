#include "segline/sampler.hpp"

#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <utility>

#include <json.hpp>

#include "segline/error.hpp"
#include "segline/parallel.hpp"

namespace segline {

using nlohmann::json;

PairExample make_pair(const Document& doc, std::size_t i, std::size_t j, PairKind kind) {
    if (i >= doc.size() || j >= doc.size() || i == j)
        throw ShapeError("invalid pair (" + std::to_string(i) + ", " + std::to_string(j) + ") in " + doc.doc_id);
    PairExample p;
    p.doc_id = doc.doc_id;
    p.i = i;
    p.j = j;
    p.sid_i = doc.sentences[i].sid;
    p.sid_j = doc.sentences[j].sid;
    p.topic_i = doc.topic(i);
    p.topic_j = doc.topic(j);
    p.stp_label = p.topic_i == p.topic_j ? 1 : 0;
    p.nsp_label = j == i + 1 ? 1 : 0;
    p.kind = kind;
    return p;
}

std::vector<PairExample> natural_pairs(const Document& doc) {
    std::vector<PairExample> out;
    for (std::size_t i = 0; i + 1 < doc.size(); ++i) out.push_back(make_pair(doc, i, i + 1, PairKind::natural));
    return out;
}

std::vector<PairExample> consecutive_sample(const Document& doc, std::size_t i, Rng& rng) {
    const std::size_t n = doc.size();
    if (i >= n) throw ShapeError("anchor out of range");
    const TopicId t = doc.topic(i);

    std::vector<PairExample> out;
    if (i + 1 < n && doc.topic(i + 1) == t) out.push_back(make_pair(doc, i, i + 1, PairKind::positive));

    std::vector<std::size_t> same;
    std::vector<std::size_t> other;
    for (std::size_t k = 0; k < n; ++k) {
        const bool neighbour = k == i || k == i + 1 || k + 1 == i;
        if (doc.topic(k) == t) {
            if (!neighbour) same.push_back(k);
        } else if (k != i + 1) {
            other.push_back(k);
        }
    }
    if (!same.empty())
        out.push_back(make_pair(doc, i, same[uniform_index(rng, same.size())], PairKind::same_topic_far));
    if (!other.empty())
        out.push_back(make_pair(doc, i, other[uniform_index(rng, other.size())], PairKind::other_topic));
    return out;
}

std::vector<PairExample> build_training_set(const std::vector<Document>& docs, std::uint64_t seed) {
    std::vector<std::vector<PairExample>> per_doc(docs.size());
    parallel_for(docs.size(), [&](std::size_t d) {
        const Document& doc = docs[d];
        Rng rng = derive_rng(seed, doc.doc_id);
        std::set<std::pair<std::size_t, std::size_t>> seen;
        auto& out = per_doc[d];
        auto add = [&](PairExample p) {
            if (seen.emplace(p.i, p.j).second) out.push_back(std::move(p));
        };
        for (auto& p : natural_pairs(doc)) add(std::move(p));
        for (std::size_t i = 0; i < doc.size(); ++i)
            for (auto& p : consecutive_sample(doc, i, rng)) add(std::move(p));
    });

    std::vector<PairExample> all;
    for (auto& v : per_doc) all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    Rng rng(splitmix64(seed));
    shuffle(std::span(all), rng);
    return all;
}

void write_pairs_jsonl(std::ostream& out, const std::vector<PairExample>& pairs) {
    for (const auto& p : pairs)
        out << json{{"doc_id", p.doc_id}, {"i", p.i},     {"j", p.j},          {"stp", p.stp_label},
                    {"nsp", p.nsp_label}, {"ti", p.topic_i}, {"tj", p.topic_j}}
                   .dump()
            << '\n';
}

std::vector<PairExample> read_pairs_jsonl(std::istream& in, const std::vector<Document>& docs) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : docs) by_id.emplace(d.doc_id, &d);

    std::vector<PairExample> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = "pairs line " + std::to_string(line_no) + ": ";
        try {
            const auto j = json::parse(line);
            const auto it = by_id.find(j.at("doc_id").get<std::string>());
            if (it == by_id.end()) throw ParseError(where + "unknown doc_id");
            auto p = make_pair(*it->second, j.at("i").get<std::size_t>(), j.at("j").get<std::size_t>(),
                               PairKind::natural);
            if (p.stp_label != j.at("stp").get<int>() || p.nsp_label != j.at("nsp").get<int>() ||
                p.topic_i != j.at("ti").get<TopicId>() || p.topic_j != j.at("tj").get<TopicId>())
                throw ParseError(where + "labels disagree with the corpus");
            pairs.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError(where + e.what());
        } catch (const ShapeError& e) {
            throw ParseError(where + e.what());
        }
    }
    return pairs;
}

}  // namespace segline
