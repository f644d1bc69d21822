#include "segline/embedder.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "segline/parallel.hpp"
#include "segline/rng.hpp"

namespace segline {

using nlohmann::json;
using LoadKind = EmbeddingLoadError::Kind;

// ---------------------------------------------------------------------------
// EmbeddingMatrix

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, bool normalized)
    : EmbeddingMatrix(rows, dim, std::vector<float>(rows * dim, 0.0f), normalized) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, bool normalized)
    : rows_(rows), dim_(dim), normalized_(normalized), data_(std::move(data)) {
    if (rows_ == 0 || dim_ == 0) throw ShapeError("embedding matrix needs n, d >= 1");
    if (data_.size() != rows_ * dim_) throw ShapeError("embedding payload does not match n*d");
}

std::span<const float> EmbeddingMatrix::row(std::size_t r) const {
    return std::span<const float>(data_).subspan(r * dim_, dim_);
}

std::span<float> EmbeddingMatrix::row(std::size_t r) {
    return std::span<float>(data_).subspan(r * dim_, dim_);
}

std::span<const float> EmbeddingMatrix::at_sid(std::size_t sid) const {
    if (sid >= rows_)
        throw ShapeError("no embedding row for sid " + std::to_string(sid) + " (rows=" + std::to_string(rows_) + ")");
    return row(sid);
}

void EmbeddingMatrix::validate() const {
    for (std::size_t r = 0; r < rows_; ++r) {
        double sq = 0.0;
        for (float x : row(r)) {
            if (!std::isfinite(x)) throw NumericalError("non-finite embedding value in row " + std::to_string(r));
            sq += static_cast<double>(x) * x;
        }
        if (normalized_ && sq > 0.0 && std::abs(std::sqrt(sq) - 1.0) > kNormTolerance)
            throw NumericalError("row " + std::to_string(r) + " has L2 norm " + std::to_string(std::sqrt(sq)) +
                                 " but the matrix is flagged normalized");
    }
}

void EmbedderConfig::validate() const {
    if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
    if (kind == EmbedderKind::file && !path) throw ConfigError("file embedder requires a path");
}

// ---------------------------------------------------------------------------
// Hash embedder

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<float> hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed, bool normalize) {
    if (dim == 0) throw ConfigError("hash_embed: dim must be >= 1");
    std::vector<double> acc(dim, 0.0);
    for (const auto& tok : tokenize(text)) {
        const std::uint64_t h = splitmix64(fnv1a64(tok) ^ splitmix64(seed));
        const std::uint64_t sign_bits = splitmix64(h ^ 0xd6e8feb86659fd93ULL);
        acc[h % dim] += (sign_bits >> 63) ? -1.0 : 1.0;
    }
    double sq = 0.0;
    for (double x : acc) sq += x * x;
    const double scale = (normalize && sq > 0.0) ? 1.0 / std::sqrt(sq) : 1.0;
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] * scale);
    return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> make_manifest(const std::vector<Document>& docs) {
    std::vector<ManifestEntry> m;
    for (const auto& d : docs)
        for (std::size_t i = 0; i < d.size(); ++i) m.push_back({d.sentences[i].sid, d.doc_id, i});
    std::sort(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.sid < b.sid; });
    return m;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path.string());
    for (const auto& e : manifest)
        out << json{{"sid", e.sid}, {"doc_id", e.doc_id}, {"index_in_doc", e.index_in_doc}}.dump() << '\n';
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw EmbeddingLoadError(LoadKind::io, "cannot open manifest: " + path.string());
    std::vector<ManifestEntry> m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            m.push_back({j.at("sid").get<std::size_t>(), j.at("doc_id").get<std::string>(),
                         j.at("index_in_doc").get<std::size_t>()});
        } catch (const json::exception& e) {
            throw EmbeddingLoadError(LoadKind::manifest_mismatch,
                                     "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// SEGEMB1 binary format

namespace {

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
    auto bits = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    out.insert(out.end(), bits.begin(), bits.end());
}

template <typename T>
T get_le(std::span<const std::byte> bytes, std::size_t offset) {
    std::array<std::byte, sizeof(T)> bits;
    std::memcpy(bits.data(), bytes.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    return std::bit_cast<T>(bits);
}

}  // namespace

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    std::vector<std::byte> buf;
    buf.reserve(kEmbeddingHeaderSize + m.data().size() * 4);
    for (char c : kEmbeddingMagic) buf.push_back(static_cast<std::byte>(c));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(m.rows()));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(m.dim()));
    put_le<std::uint8_t>(buf, m.normalized() ? 1 : 0);
    for (int i = 0; i < 3; ++i) buf.push_back(std::byte{0});
    for (float x : m.data()) put_le<float>(buf, x);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write embeddings: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("write failed: " + path.string());
}

EmbeddingMatrix parse_embeddings(std::span<const std::byte> bytes) {
    if (bytes.size() < sizeof(kEmbeddingMagic) ||
        std::memcmp(bytes.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0)
        throw EmbeddingLoadError(LoadKind::bad_magic, "not a SEGEMB1 file (bad magic)");
    if (bytes.size() < kEmbeddingHeaderSize)
        throw EmbeddingLoadError(LoadKind::truncated, "SEGEMB1 header truncated");

    const auto n = get_le<std::uint32_t>(bytes, 8);
    const auto d = get_le<std::uint32_t>(bytes, 12);
    const auto flags = get_le<std::uint8_t>(bytes, 16);
    if (n == 0 || d == 0) throw EmbeddingLoadError(LoadKind::bad_header, "SEGEMB1 header has n or d == 0");
    if ((flags & ~1u) != 0) throw EmbeddingLoadError(LoadKind::bad_header, "SEGEMB1 header has unknown flag bits");

    const std::size_t count = static_cast<std::size_t>(n) * d;
    const std::size_t payload = bytes.size() - kEmbeddingHeaderSize;
    if (payload < count * 4)
        throw EmbeddingLoadError(LoadKind::truncated, "SEGEMB1 payload truncated: expected " +
                                                          std::to_string(count * 4) + " bytes, found " +
                                                          std::to_string(payload));
    if (payload != count * 4)
        throw EmbeddingLoadError(LoadKind::size_mismatch, "SEGEMB1 payload is " + std::to_string(payload) +
                                                              " bytes but n*d*4 = " + std::to_string(count * 4));

    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = get_le<float>(bytes, kEmbeddingHeaderSize + 4 * i);
    EmbeddingMatrix m(n, d, std::move(data), (flags & 1u) != 0);
    try {
        m.validate();
    } catch (const NumericalError& e) {
        throw EmbeddingLoadError(LoadKind::bad_norm, e.what());
    }
    return m;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const std::optional<std::filesystem::path>& manifest_path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EmbeddingLoadError(LoadKind::io, "cannot open embeddings: " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto m = parse_embeddings(std::as_bytes(std::span(raw)));

    if (manifest_path) {
        const auto manifest = read_manifest(*manifest_path);
        if (manifest.size() != m.rows())
            throw EmbeddingLoadError(LoadKind::manifest_mismatch,
                                     "manifest has " + std::to_string(manifest.size()) + " lines, file has " +
                                         std::to_string(m.rows()) + " rows");
        for (std::size_t r = 0; r < manifest.size(); ++r)
            if (manifest[r].sid != r)
                throw EmbeddingLoadError(LoadKind::manifest_mismatch,
                                         "manifest line " + std::to_string(r + 1) + " has sid " +
                                             std::to_string(manifest[r].sid));
    }
    return m;
}

// ---------------------------------------------------------------------------

namespace {

void require_dense_sids(const std::vector<Document>& docs, std::size_t total) {
    std::vector<char> seen(total, 0);
    for (const auto& d : docs)
        for (const auto& s : d.sentences) {
            if (s.sid >= total || seen[s.sid])
                throw ShapeError("sentence sids must cover 0.." + std::to_string(total - 1) + " exactly once");
            seen[s.sid] = 1;
        }
}

}  // namespace

EmbeddingMatrix embed_corpus(const std::vector<Document>& docs, const EmbedderConfig& config) {
    config.validate();
    const std::size_t total = sentence_count(docs);
    if (total == 0) throw ShapeError("cannot embed an empty corpus");
    require_dense_sids(docs, total);

    if (config.kind == EmbedderKind::file) {
        auto m = load_embeddings(*config.path, config.manifest_path);
        if (m.dim() != config.dim)
            throw ConfigError("embedding file has d=" + std::to_string(m.dim()) + ", config says " +
                              std::to_string(config.dim));
        if (m.rows() != total)
            throw EmbeddingLoadError(LoadKind::manifest_mismatch,
                                     "embedding file has " + std::to_string(m.rows()) + " rows, corpus has " +
                                         std::to_string(total) + " sentences");
        if (config.manifest_path) {
            const auto expected = make_manifest(docs);
            const auto actual = read_manifest(*config.manifest_path);
            if (expected != actual)
                throw EmbeddingLoadError(LoadKind::manifest_mismatch, "manifest does not match corpus order");
        }
        return m;
    }

    EmbeddingMatrix m(total, config.dim, config.normalize);
    parallel_for(docs.size(), [&](std::size_t di) {
        for (const auto& s : docs[di].sentences) {
            const auto v = hash_embed(s.text, config.dim, config.seed, config.normalize);
            std::copy(v.begin(), v.end(), m.row(s.sid).begin());
        }
    });
    return m;
}

EmbeddingMatrix embed_corpus(const CorpusSplit& split, const EmbedderConfig& config) {
    std::vector<Document> all;
    all.reserve(split.train.size() + split.valid.size() + split.test.size());
    for (const auto* part : {&split.train, &split.valid, &split.test})
        all.insert(all.end(), part->begin(), part->end());
    return embed_corpus(all, config);
}

}  // namespace segline
