#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segline/corpus.hpp"
#include "segline/error.hpp"

namespace segline {

// Row-major n x d float32 matrix; row r holds the vector of sentence sid r.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim, bool normalized = false);
    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, bool normalized);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    bool normalized() const { return normalized_; }

    std::span<const float> row(std::size_t r) const;
    std::span<float> row(std::size_t r);
    // Throws ShapeError when the sid has no row.
    std::span<const float> at_sid(std::size_t sid) const;

    const std::vector<float>& data() const { return data_; }

    // Throws NumericalError on a non-finite entry or, when normalized, a
    // nonzero row whose L2 norm is off by more than kNormTolerance.
    void validate() const;

    static constexpr double kNormTolerance = 1e-4;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    bool normalized_ = false;
    std::vector<float> data_;
};

enum class EmbedderKind { hash, file };

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::hash;
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    bool normalize = true;
    std::optional<std::filesystem::path> path;
    std::optional<std::filesystem::path> manifest_path;

    void validate() const;
};

// Lowercase ASCII alphanumeric runs. Other bytes separate tokens.
std::vector<std::string> tokenize(std::string_view text);

// Signed feature hashing: each token picks a bucket in [0, dim) and, from an
// independent hash bit, a sign. Signed counts are summed and the result is
// L2-normalized unless it is zero (or normalize is false).
std::vector<float> hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed,
                              bool normalize = true);

// ---------------------------------------------------------------------------
// SEGEMB1 files: magic "SEGEMB1\0", u32 n, u32 d, u8 flags (bit0 = L2
// normalized), 3 zero bytes, then n*d little-endian float32 row-major.

inline constexpr char kEmbeddingMagic[8] = {'S', 'E', 'G', 'E', 'M', 'B', '1', '\0'};
inline constexpr std::size_t kEmbeddingHeaderSize = 20;

class EmbeddingLoadError : public Error {
public:
    enum class Kind { io, bad_magic, bad_header, truncated, size_mismatch, manifest_mismatch, bad_norm };

    EmbeddingLoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct ManifestEntry {
    std::size_t sid = 0;
    std::string doc_id;
    std::size_t index_in_doc = 0;
    bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> make_manifest(const std::vector<Document>& docs);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
// Parses a SEGEMB1 byte image.
EmbeddingMatrix parse_embeddings(std::span<const std::byte> bytes);
// Loads and validates a SEGEMB1 file. When a manifest is given its line r
// must carry sid r and its length must equal n.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const std::optional<std::filesystem::path>& manifest_path = std::nullopt);

// One row per sentence, row r = sid r. The documents must cover sids 0..N-1
// exactly once. Splits of one corpus share a single matrix.
EmbeddingMatrix embed_corpus(const std::vector<Document>& docs, const EmbedderConfig& config);
EmbeddingMatrix embed_corpus(const CorpusSplit& split, const EmbedderConfig& config);

}  // namespace segline
