#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "segline/corpus.hpp"
#include "segline/embedder.hpp"
#include "segline/model.hpp"

namespace segline {

enum class SegmentMode { stp, tc_only };

SegmentMode parse_segment_mode(const std::string& name);
std::string to_string(SegmentMode mode);

// Boundary at i when the STP head calls (s_i, s_{i+1}) different-topic.
Segmentation segment_stp(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings);

// Boundary at i when the TC head's argmax differs between s_i and s_{i+1}.
Segmentation segment_tc_only(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings);

Segmentation segment(const HeadParams& params, const Document& doc, const EmbeddingMatrix& embeddings,
                     SegmentMode mode);

// Segments every document (in parallel); output order follows docs.
std::vector<Segmentation> segment_all(const HeadParams& params, const std::vector<Document>& docs,
                                      const EmbeddingMatrix& embeddings, SegmentMode mode);

// Half-open [start, end) sentence ranges.
std::vector<std::pair<std::size_t, std::size_t>> segments_from_boundaries(const Segmentation& s);
Segmentation boundaries_from_segments(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& segs);

struct SegmentRecord {
    std::string doc_id;
    Segmentation segmentation;
};

// {"doc_id", "boundaries": [...], "segments": [[start, end], ...]}
void write_segments(std::ostream& out, const std::string& doc_id, const Segmentation& segmentation);
void write_segments(const std::filesystem::path& path, const std::vector<SegmentRecord>& records);
std::vector<SegmentRecord> read_segments(std::istream& in);
std::vector<SegmentRecord> read_segments(const std::filesystem::path& path);

}  // namespace segline
