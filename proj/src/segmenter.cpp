#include "segline/segmenter.hpp"

#include <fstream>

#include <json.hpp>

#include "segline/error.hpp"
#include "segline/parallel.hpp"

namespace segline {

using nlohmann::json;

SegmentMode parse_segment_mode(const std::string& name) {
    if (name == "stp") return SegmentMode::stp;
    if (name == "tc_only") return SegmentMode::tc_only;
    throw ConfigError("unknown segmentation mode: " + name + " (expected stp or tc_only)");
}

std::string to_string(SegmentMode mode) {
    return mode == SegmentMode::stp ? "stp" : "tc_only";
}

Segmentation segment_stp(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings) {
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i + 1 < doc.size(); ++i) {
        const auto p = predict(params, embeddings.at_sid(doc.sentences[i].sid),
                               embeddings.at_sid(doc.sentences[i + 1].sid));
        if (p.stp == 0) b.push_back(i);
    }
    return Segmentation(doc.size(), std::move(b));
}

Segmentation segment_tc_only(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings) {
    std::vector<std::size_t> topics;
    topics.reserve(doc.size());
    for (const auto& s : doc.sentences) topics.push_back(argmax(topic_logits(params, embeddings.at_sid(s.sid))));
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i + 1 < doc.size(); ++i)
        if (topics[i] != topics[i + 1]) b.push_back(i);
    return Segmentation(doc.size(), std::move(b));
}

Segmentation segment(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings,
                     SegmentMode mode) {
    return mode == SegmentMode::stp ? segment_stp(params, doc, embeddings)
                                    : segment_tc_only(params, doc, embeddings);
}

std::vector<Segmentation> segment_all(const HeadParams& params, const std::vector<Document>& docs,
                                      const EmbeddingMatrix& embeddings, SegmentMode mode) {
    std::vector<Segmentation> out(docs.size());
    parallel_for(docs.size(), [&](std::size_t d) { out[d] = segment(params, docs[d], embeddings, mode); });
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> segments_from_boundaries(const Segmentation& s) {
    std::vector<std::pair<std::size_t, std::size_t>> segs;
    if (s.n == 0) return segs;
    std::size_t start = 0;
    for (std::size_t b : s.boundaries) {
        segs.emplace_back(start, b + 1);
        start = b + 1;
    }
    segs.emplace_back(start, s.n);
    return segs;
}

Segmentation boundaries_from_segments(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& segs) {
    std::vector<std::size_t> b;
    std::size_t expected = 0;
    for (const auto& [start, end] : segs) {
        if (start != expected || end <= start || end > n) throw ParseError("segments do not tile [0, n)");
        if (end < n) b.push_back(end - 1);
        expected = end;
    }
    if (n > 0 && expected != n) throw ParseError("segments do not tile [0, n)");
    return Segmentation(n, std::move(b));
}

void write_segments(std::ostream& out, const std::string& doc_id, const Segmentation& segmentation) {
    json segs = json::array();
    for (const auto& [s, e] : segments_from_boundaries(segmentation)) segs.push_back({s, e});
    out << json{{"doc_id", doc_id}, {"boundaries", segmentation.boundaries}, {"segments", std::move(segs)}}.dump()
        << '\n';
}

void write_segments(const std::filesystem::path& path, const std::vector<SegmentRecord>& records) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write segments: " + path.string());
    for (const auto& r : records) write_segments(out, r.doc_id, r.segmentation);
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<SegmentRecord> read_segments(std::istream& in) {
    std::vector<SegmentRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = "segments line " + std::to_string(line_no) + ": ";
        try {
            const auto j = json::parse(line);
            std::vector<std::pair<std::size_t, std::size_t>> segs;
            for (const auto& s : j.at("segments")) segs.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
            const std::size_t n = segs.empty() ? 0 : segs.back().second;
            auto seg = boundaries_from_segments(n, segs);
            if (seg.boundaries != j.at("boundaries").get<std::vector<std::size_t>>())
                throw ParseError(where + "boundaries and segments disagree");
            records.push_back({j.at("doc_id").get<std::string>(), std::move(seg)});
        } catch (const json::exception& e) {
            throw ParseError(where + e.what());
        } catch (const ShapeError& e) {
            throw ParseError(where + e.what());
        }
    }
    return records;
}

std::vector<SegmentRecord> read_segments(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open segments: " + path.string());
    return read_segments(in);
}

}  // namespace segline
