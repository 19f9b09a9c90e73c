#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "oemb/error.hpp"
#include "oemb/tensor.hpp"

namespace oemb {

static_assert(std::endian::native == std::endian::little, "VFEA/OEMB I/O assumes a little-endian host");

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    return in;
}

}  // namespace detail

/// Token -> word vector lookup, GloVe text layout.
class WordTable {
public:
    WordTable() = default;

    std::size_t dim() const noexcept { return vectors_.cols(); }
    std::size_t size() const noexcept { return tokens_.size(); }

    /// Appends an entry; throws on a duplicate token or a dimension mismatch.
    void add(std::string token, std::span<const double> vec) {
        if (tokens_.empty()) {
            require_shape(!vec.empty(), "word vectors must be non-empty");
            vectors_ = Matrix<double>(0, vec.size());
        }
        require_shape(vec.size() == dim(), "word vector dimension mismatch for token '" + token + "'");
        if (index_.contains(token)) {
            throw ValidationError("duplicate token '" + token + "'");
        }
        index_.emplace(token, tokens_.size());
        tokens_.push_back(std::move(token));
        auto& d = vectors_.data();
        d.insert(d.end(), vec.begin(), vec.end());
        vectors_ = Matrix<double>(tokens_.size(), dim(), std::move(d));
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    std::optional<std::span<const double>> find(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return vectors_.row(it->second);
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    Matrix<double> vectors_;
};

/// N x d_w word vectors of one sentence, N >= 1.
template <typename Scalar>
struct SentenceFeatures {
    Matrix<Scalar> rows;

    SentenceFeatures() = default;
    explicit SentenceFeatures(Matrix<Scalar> m) : rows(std::move(m)) {
        if (rows.rows() == 0 || rows.cols() == 0) {
            throw ValidationError("sentence features must have at least one row");
        }
        if (!all_finite<Scalar>(rows.data())) {
            throw ValidationError("sentence features contain non-finite values");
        }
    }

    std::size_t length() const noexcept { return rows.rows(); }
    std::size_t dim() const noexcept { return rows.cols(); }
};

/// M x d_v frame features of one video (an image is a one-frame video).
template <typename Scalar>
struct VideoFeatures {
    Matrix<Scalar> frames;

    VideoFeatures() = default;
    explicit VideoFeatures(Matrix<Scalar> m) : frames(std::move(m)) {
        if (frames.rows() == 0 || frames.cols() == 0) {
            throw ValidationError("video features must have at least one frame");
        }
        if (!all_finite<Scalar>(frames.data())) {
            throw ValidationError("video features contain non-finite values");
        }
    }

    std::size_t length() const noexcept { return frames.rows(); }
    std::size_t dim() const noexcept { return frames.cols(); }
};

/// Reads `token f1 ... fd` lines; d is taken from the first line.
inline WordTable load_word_table(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    WordTable table;
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> vec;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = detail::split_ws(line);
        if (fields.empty()) {
            continue;
        }
        if (fields.size() < 2) {
            throw ParseError(path.string(), lineno, "expected a token followed by at least one value");
        }
        vec.clear();
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto v = detail::parse_double(fields[i]);
            if (!v) {
                throw ParseError(path.string(), lineno, "unparsable value '" + std::string(fields[i]) + "'");
            }
            vec.push_back(*v);
        }
        if (table.size() > 0 && vec.size() != table.dim()) {
            throw ParseError(path.string(), lineno,
                             "dimension mismatch: expected " + std::to_string(table.dim()) + " values, got " +
                                 std::to_string(vec.size()));
        }
        try {
            table.add(std::string(fields[0]), vec);
        } catch (const ValidationError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    if (table.size() == 0) {
        throw ValidationError(path.string() + ": word table is empty");
    }
    return table;
}

/// Looks tokens up in order. Out-of-vocabulary tokens are dropped.
template <typename Scalar = double>
SentenceFeatures<Scalar> encode_tokens(const WordTable& table, std::span<const std::string> tokens) {
    if (tokens.empty()) {
        throw ValidationError("cannot encode an empty token list");
    }
    std::vector<Scalar> data;
    std::size_t n = 0;
    for (const auto& tok : tokens) {
        if (auto vec = table.find(tok)) {
            data.insert(data.end(), vec->begin(), vec->end());
            ++n;
        }
    }
    if (n == 0) {
        throw ValidationError("every token is out of vocabulary");
    }
    return SentenceFeatures<Scalar>(Matrix<Scalar>(n, table.dim(), std::move(data)));
}

// VFEA: "VFEA" | u32 M | u32 d | M*d f32, all little-endian, row-major.

inline constexpr std::array<char, 4> kVfeaMagic{'V', 'F', 'E', 'A'};

template <typename Scalar>
VideoFeatures<Scalar> read_video_features(std::istream& in, const std::string& source = "<stream>") {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size())) {
        throw ValidationError(source + ": truncated VFEA header");
    }
    if (magic != kVfeaMagic) {
        throw ValidationError(source + ": bad magic, not a VFEA file");
    }
    std::uint32_t m = 0;
    std::uint32_t d = 0;
    if (!in.read(reinterpret_cast<char*>(&m), 4) || !in.read(reinterpret_cast<char*>(&d), 4)) {
        throw ValidationError(source + ": truncated VFEA header");
    }
    if (m == 0 || d == 0) {
        throw ValidationError(source + ": VFEA header has zero frames or zero dimension");
    }
    const std::size_t count = static_cast<std::size_t>(m) * d;
    std::vector<float> raw(count);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(float)))) {
        throw ValidationError(source + ": truncated VFEA payload (expected " + std::to_string(count) + " floats)");
    }
    std::vector<Scalar> data(raw.begin(), raw.end());
    return VideoFeatures<Scalar>(Matrix<Scalar>(m, d, std::move(data)));
}

template <typename Scalar = double>
VideoFeatures<Scalar> load_video_features(const std::filesystem::path& path) {
    auto in = detail::open_input(path, std::ios::binary);
    return read_video_features<Scalar>(in, path.string());
}

template <typename Scalar>
void write_video_features(std::ostream& out, const VideoFeatures<Scalar>& v) {
    const auto m = static_cast<std::uint32_t>(v.length());
    const auto d = static_cast<std::uint32_t>(v.dim());
    out.write(kVfeaMagic.data(), kVfeaMagic.size());
    out.write(reinterpret_cast<const char*>(&m), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    std::vector<float> raw(v.frames.data().begin(), v.frames.data().end());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

template <typename Scalar>
void save_video_features(const std::filesystem::path& path, const VideoFeatures<Scalar>& v) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write_video_features(out, v);
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

/// Whitespace-separated text, one frame per line.
template <typename Scalar = double>
VideoFeatures<Scalar> load_frame_text(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::vector<Scalar> data;
    std::size_t dim = 0;
    std::size_t rows = 0;
    std::size_t lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = detail::split_ws(line);
        if (fields.empty()) {
            continue;
        }
        if (rows == 0) {
            dim = fields.size();
        } else if (fields.size() != dim) {
            throw ParseError(path.string(), lineno, "frame dimension mismatch");
        }
        for (auto f : fields) {
            auto v = detail::parse_double(f);
            if (!v) {
                throw ParseError(path.string(), lineno, "unparsable value '" + std::string(f) + "'");
            }
            data.push_back(static_cast<Scalar>(*v));
        }
        ++rows;
    }
    if (rows == 0) {
        throw ValidationError(path.string() + ": no frames");
    }
    return VideoFeatures<Scalar>(Matrix<Scalar>(rows, dim, std::move(data)));
}

/// Keeps frames 0, stride, 2*stride, ...
template <typename Scalar>
VideoFeatures<Scalar> subsample_frames(const VideoFeatures<Scalar>& v, std::size_t stride) {
    if (stride == 0) {
        throw ValidationError("frame stride must be positive");
    }
    const std::size_t kept = (v.length() + stride - 1) / stride;
    Matrix<Scalar> out(kept, v.dim());
    for (std::size_t k = 0; k < kept; ++k) {
        auto src = v.frames.row(k * stride);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return VideoFeatures<Scalar>(std::move(out));
}

enum class Split { train, valid, test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    return std::nullopt;
}

struct ManifestItem {
    std::string id;
    Split split = Split::train;
    /// Resolved against the manifest's directory; empty for caption-only rows.
    std::filesystem::path features;
    std::vector<std::string> tokens;
    std::vector<std::string> activity_labels;
    bool rephrase = false;

    bool has_video() const noexcept { return !features.empty(); }
};

struct DatasetManifest {
    std::vector<ManifestItem> items;

    const ManifestItem* find(std::string_view id) const {
        auto it = std::find_if(items.begin(), items.end(), [&](const ManifestItem& m) { return m.id == id; });
        return it == items.end() ? nullptr : &*it;
    }

    std::vector<const ManifestItem*> in_split(Split s) const {
        std::vector<const ManifestItem*> out;
        for (const auto& item : items) {
            if (item.split == s) {
                out.push_back(&item);
            }
        }
        return out;
    }
};

inline ManifestItem parse_manifest_record(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) {
        throw ValidationError("record is not a JSON object");
    }
    static const std::unordered_set<std::string> known{"id", "split", "features", "tokens", "activity_labels",
                                                       "rephrase"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown key '" + key + "'");
        }
    }
    ManifestItem item;
    if (!j.contains("id") || !j["id"].is_string()) {
        throw ValidationError("missing string 'id'");
    }
    item.id = j["id"].get<std::string>();
    if (!j.contains("split") || !j["split"].is_string()) {
        throw ValidationError("missing string 'split'");
    }
    auto split = parse_split(j["split"].get<std::string>());
    if (!split) {
        throw ValidationError("unknown split '" + j["split"].get<std::string>() + "' (expected train|valid|test)");
    }
    item.split = *split;
    if (j.contains("features") && !j["features"].is_null()) {
        if (!j["features"].is_string()) {
            throw ValidationError("'features' must be a path or null");
        }
        std::filesystem::path p = j["features"].get<std::string>();
        item.features = p.is_absolute() ? p : base_dir / p;
    }
    if (!j.contains("tokens") || !j["tokens"].is_array()) {
        throw ValidationError("missing array 'tokens'");
    }
    item.tokens = j["tokens"].get<std::vector<std::string>>();
    if (item.tokens.empty()) {
        throw ValidationError("empty caption for id '" + item.id + "'");
    }
    if (j.contains("activity_labels")) {
        item.activity_labels = j["activity_labels"].get<std::vector<std::string>>();
    }
    if (j.contains("rephrase")) {
        item.rephrase = j["rephrase"].get<bool>();
    }
    return item;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    DatasetManifest manifest;
    std::unordered_set<std::string> seen;
    const auto base = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::split_ws(line).empty()) {
            continue;
        }
        ManifestItem item;
        try {
            item = parse_manifest_record(nlohmann::json::parse(line), base);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        if (!seen.insert(item.id).second) {
            throw ParseError(path.string(), lineno, "duplicate id '" + item.id + "'");
        }
        manifest.items.push_back(std::move(item));
    }
    return manifest;
}

}  // namespace oemb
