#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "vac/errors.hpp"
#include "vac/rng.hpp"
#include "vac/tensor.hpp"

namespace vac {

// ----- dataset carrier --------------------------------------------------------

template <class S>
struct Dataset {
    Tensor<S> images;        // [N, C, H, W], values in [0,1]
    std::vector<int> labels; // N entries
    std::string split = "train";
    std::string source = "synthetic";

    std::size_t size() const { return labels.size(); }

    void validate(std::size_t n_classes) const {
        if (images.rank() != 4) throw ConfigError("dataset: images must be [N,C,H,W]");
        if (images.shape[0] != labels.size())
            throw ConfigError("dataset: " + std::to_string(images.shape[0]) + " images vs " +
                              std::to_string(labels.size()) + " labels");
        for (int y : labels)
            if (y < 0 || std::size_t(y) >= n_classes)
                throw ConfigError("dataset: label " + std::to_string(y) + " out of range [0," +
                                  std::to_string(n_classes) + ")");
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        const std::size_t C = images.shape[1], H = images.shape[2], W = images.shape[3];
        const std::size_t px = C * H * W;
        Dataset out;
        out.images = Tensor<S>({idx.size(), C, H, W});
        out.labels.resize(idx.size());
        out.split = split;
        out.source = source;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= size()) throw ConfigError("dataset: subset index out of range");
            std::copy_n(images.ptr() + idx[i] * px, px, out.images.ptr() + i * px);
            out.labels[i] = labels[idx[i]];
        }
        return out;
    }

    Dataset head(std::size_t n) const {
        n = std::min(n, size());
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return subset(idx);
    }
};

// ----- IDX format ---------------------------------------------------------------
//
// Big-endian headers: magic u32 (0x00000803 images / 0x00000801 labels), then
// one u32 per dimension, then the u8 payload. Pixels normalize as u8/255, so
// 255 maps to exactly 1.0.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

inline std::uint32_t idx_be32(const std::vector<unsigned char>& b, std::size_t off,
                              const std::string& what) {
    if (off + 4 > b.size()) throw IoError("idx: truncated while reading " + what);
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline bool looks_gzipped(const std::vector<unsigned char>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
    z_stream strm{};
    if (inflateInit2(&strm, 15 + 32) != Z_OK) throw IoError("gzip: inflateInit failed");
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    std::vector<unsigned char> buf(1 << 16);
    strm.next_in = const_cast<unsigned char*>(in.data());
    strm.avail_in = uInt(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        strm.next_out = buf.data();
        strm.avail_out = uInt(buf.size());
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw IoError("gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
        if (rc == Z_OK && strm.avail_in == 0 && strm.avail_out != 0) {
            inflateEnd(&strm);
            throw IoError("gzip: truncated stream");
        }
    }
    inflateEnd(&strm);
    return out;
}

inline std::vector<unsigned char> gzip_compress(const std::vector<unsigned char>& in) {
    z_stream strm{};
    if (deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("gzip: deflateInit failed");
    std::vector<unsigned char> out;
    std::vector<unsigned char> buf(1 << 16);
    strm.next_in = const_cast<unsigned char*>(in.data());
    strm.avail_in = uInt(in.size());
    int rc = Z_OK;
    do {
        strm.next_out = buf.data();
        strm.avail_out = uInt(buf.size());
        rc = deflate(&strm, Z_FINISH);
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
    } while (rc != Z_STREAM_END);
    deflateEnd(&strm);
    return out;
}

template <class S>
Tensor<S> parse_idx_images(const std::vector<unsigned char>& raw) {
    const auto bytes = looks_gzipped(raw) ? gunzip(raw) : raw;
    const std::uint32_t magic = idx_be32(bytes, 0, "image magic");
    if (magic != kIdxImagesMagic)
        throw IoError("idx: bad image magic 0x" + [&] {
            char b[16];
            std::snprintf(b, sizeof b, "%08x", magic);
            return std::string(b);
        }());
    const std::size_t n = idx_be32(bytes, 4, "image count");
    const std::size_t h = idx_be32(bytes, 8, "image rows");
    const std::size_t w = idx_be32(bytes, 12, "image cols");
    const std::size_t need = 16 + n * h * w;
    if (bytes.size() < need)
        throw IoError("idx: truncated image payload (need " + std::to_string(need) + " bytes, have " +
                      std::to_string(bytes.size()) + ")");
    Tensor<S> images({n, 1, h, w});
    for (std::size_t i = 0; i < n * h * w; ++i) images[i] = S(bytes[16 + i]) / S(255);
    return images;
}

inline std::vector<int> parse_idx_labels(const std::vector<unsigned char>& raw) {
    const auto bytes = looks_gzipped(raw) ? gunzip(raw) : raw;
    const std::uint32_t magic = idx_be32(bytes, 0, "label magic");
    if (magic != kIdxLabelsMagic)
        throw IoError("idx: bad label magic");
    const std::size_t n = idx_be32(bytes, 4, "label count");
    if (bytes.size() < 8 + n)
        throw IoError("idx: truncated label payload");
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = int(bytes[8 + i]);
    return labels;
}

// Serializers for fixtures and round-trip tests; images quantize to u8 by
// rounding value*255.
template <class S>
std::vector<unsigned char> serialize_idx_images(const Tensor<S>& images) {
    if (images.rank() != 4 || images.shape[1] != 1)
        throw ConfigError("idx: writer expects [N,1,H,W]");
    const std::size_t n = images.shape[0], h = images.shape[2], w = images.shape[3];
    std::vector<unsigned char> out;
    out.reserve(16 + n * h * w);
    auto put32 = [&](std::uint32_t v) {
        out.push_back((v >> 24) & 0xff);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back(v & 0xff);
    };
    put32(kIdxImagesMagic);
    put32(std::uint32_t(n));
    put32(std::uint32_t(h));
    put32(std::uint32_t(w));
    for (std::size_t i = 0; i < n * h * w; ++i) {
        const double v = std::clamp(double(images[i]), 0.0, 1.0);
        out.push_back((unsigned char)std::lround(v * 255.0));
    }
    return out;
}

inline std::vector<unsigned char> serialize_idx_labels(const std::vector<int>& labels) {
    std::vector<unsigned char> out;
    out.reserve(8 + labels.size());
    auto put32 = [&](std::uint32_t v) {
        out.push_back((v >> 24) & 0xff);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back(v & 0xff);
    };
    put32(kIdxLabelsMagic);
    put32(std::uint32_t(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255) throw ConfigError("idx: label out of u8 range");
        out.push_back((unsigned char)y);
    }
    return out;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!os) throw IoError("write failed: " + path);
}

template <class S>
Dataset<S> load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                            const std::string& split, const std::string& source) {
    Dataset<S> ds;
    ds.images = parse_idx_images<S>(read_file_bytes(images_path));
    ds.labels = parse_idx_labels(read_file_bytes(labels_path));
    ds.split = split;
    ds.source = source;
    if (ds.images.shape[0] != ds.labels.size())
        throw IoError("idx: " + std::to_string(ds.images.shape[0]) + " images in " + images_path +
                      " vs " + std::to_string(ds.labels.size()) + " labels in " + labels_path);
    return ds;
}

// ----- deterministic batching ----------------------------------------------------

struct BatchPlan {
    std::uint64_t seed = 0;
    std::size_t batch_size = 100;
};

// Epoch permutation is a bijection fixed by (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x62617463u /*'batc'*/, std::uint64_t(epoch)));
    deterministic_shuffle(order, rng);
    return order;
}

// ceil(N/B) contiguous slices of the epoch permutation; the final short batch
// is kept so every index appears exactly once.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, const BatchPlan& plan,
                                                           int epoch) {
    if (plan.batch_size == 0) throw ConfigError("batch size must be positive");
    const auto order = epoch_permutation(n, plan.seed, epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += plan.batch_size) {
        const std::size_t stop = std::min(n, start + plan.batch_size);
        batches.emplace_back(order.begin() + std::ptrdiff_t(start),
                             order.begin() + std::ptrdiff_t(stop));
    }
    return batches;
}

template <class S>
struct LabeledBatch {
    Tensor<S> images;
    std::vector<int> labels;
    std::vector<std::size_t> indices; // dataset indices, used to key noise draws
};

template <class S>
LabeledBatch<S> gather_batch(const Dataset<S>& ds, const std::vector<std::size_t>& idx) {
    LabeledBatch<S> b;
    Dataset<S> sub = ds.subset(idx);
    b.images = std::move(sub.images);
    b.labels = std::move(sub.labels);
    b.indices = idx;
    return b;
}

// ----- synthetic fixtures ---------------------------------------------------------

// Two linearly separable classes: class 0 bright top half, class 1 bright
// bottom half, plus clamped Gaussian pixel noise.
template <class S>
Dataset<S> synthetic_blobs(std::size_t n, std::size_t hw, std::uint64_t seed,
                           double noise_sigma = 0.05) {
    if (n % 2 != 0) throw ConfigError("synthetic_blobs: n must be even");
    Dataset<S> ds;
    ds.images = Tensor<S>({n, 1, hw, hw});
    ds.labels.resize(n);
    ds.source = "synthetic";
    Rng rng(derive_seed(seed, 0x626c6f62u /*'blob'*/));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = int(i % 2);
        ds.labels[i] = label;
        for (std::size_t r = 0; r < hw; ++r) {
            const bool bright = label == 0 ? (r < hw / 2) : (r >= hw / 2);
            for (std::size_t c = 0; c < hw; ++c) {
                double v = bright ? 0.9 : 0.1;
                v += noise_sigma * rng.normal();
                ds.images.at(i, 0, r, c) = S(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return ds;
}

namespace glyph {

using Point = std::pair<double, double>;
using Polyline = std::vector<Point>;

inline void arc(Polyline& p, double cx, double cy, double rx, double ry, double a0, double a1,
                int steps) {
    for (int s = 0; s <= steps; ++s) {
        const double a = a0 + (a1 - a0) * double(s) / double(steps);
        p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
}

// Stroke skeletons for the ten digit classes, unit square, y pointing down.
inline const std::vector<std::vector<Polyline>>& digit_strokes() {
    static const std::vector<std::vector<Polyline>> strokes = [] {
        const double pi = 3.14159265358979323846;
        std::vector<std::vector<Polyline>> g(10);
        { // 0: oval
            Polyline p;
            arc(p, 0.5, 0.5, 0.21, 0.30, 0.0, 2.0 * pi, 24);
            g[0] = {p};
        }
        { // 1: flag + vertical
            g[1] = {{{0.38, 0.32}, {0.54, 0.20}, {0.54, 0.80}}};
        }
        { // 2: top arc, diagonal, base bar
            Polyline top;
            arc(top, 0.5, 0.36, 0.20, 0.16, -pi, 0.0, 12);
            g[2] = {top, {{0.70, 0.36}, {0.68, 0.52}, {0.32, 0.78}}, {{0.32, 0.78}, {0.72, 0.78}}};
        }
        { // 3: two right-open arcs
            Polyline top, bot;
            arc(top, 0.47, 0.34, 0.19, 0.14, -0.8 * pi, 0.45 * pi, 12);
            arc(bot, 0.47, 0.64, 0.21, 0.16, -0.45 * pi, 0.8 * pi, 12);
            g[3] = {top, bot};
        }
        { // 4: diagonal, crossbar, vertical
            g[4] = {{{0.58, 0.20}, {0.30, 0.60}, {0.76, 0.60}}, {{0.62, 0.34}, {0.62, 0.82}}};
        }
        { // 5: cap bar, down stroke, belly
            Polyline belly;
            arc(belly, 0.46, 0.62, 0.22, 0.18, -0.5 * pi, 0.75 * pi, 14);
            g[5] = {{{0.70, 0.22}, {0.36, 0.22}, {0.34, 0.48}}, belly};
        }
        { // 6: sweep + loop
            Polyline loop;
            arc(loop, 0.50, 0.62, 0.17, 0.17, 0.0, 2.0 * pi, 20);
            g[6] = {{{0.64, 0.20}, {0.44, 0.40}, {0.35, 0.58}}, loop};
        }
        { // 7: top bar + diagonal
            g[7] = {{{0.30, 0.22}, {0.72, 0.22}, {0.44, 0.80}}};
        }
        { // 8: stacked loops
            Polyline top, bot;
            arc(top, 0.5, 0.36, 0.145, 0.135, 0.0, 2.0 * pi, 18);
            arc(bot, 0.5, 0.65, 0.175, 0.155, 0.0, 2.0 * pi, 18);
            g[8] = {top, bot};
        }
        { // 9: loop + tail
            Polyline loop;
            arc(loop, 0.50, 0.38, 0.16, 0.155, 0.0, 2.0 * pi, 18);
            g[9] = {loop, {{0.66, 0.40}, {0.62, 0.80}}};
        }
        return g;
    }();
    return strokes;
}

inline double dist_to_segment(double px, double py, const Point& a, const Point& b) {
    const double vx = b.first - a.first, vy = b.second - a.second;
    const double wx = px - a.first, wy = py - a.second;
    const double vv = vx * vx + vy * vy;
    const double t = vv > 0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
    const double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

inline double dist_to_strokes(double px, double py, const std::vector<Polyline>& strokes) {
    double best = 1e9;
    for (const auto& poly : strokes)
        for (std::size_t i = 0; i + 1 < poly.size(); ++i)
            best = std::min(best, dist_to_segment(px, py, poly[i], poly[i + 1]));
    return best;
}

struct Affine {
    // maps pixel-space unit coords back into glyph coords
    double m00, m01, m10, m11, tx, ty;

    static Affine jitter(Rng& rng, double max_rot, double min_scale, double max_scale,
                         double max_shift) {
        const double rot = rng.uniform(-max_rot, max_rot);
        const double sx = rng.uniform(min_scale, max_scale);
        const double sy = rng.uniform(min_scale, max_scale);
        const double shx = rng.uniform(-max_shift, max_shift);
        const double shy = rng.uniform(-max_shift, max_shift);
        // inverse of (rotate then scale then translate) around image center
        const double c = std::cos(rot), s = std::sin(rot);
        Affine a;
        a.m00 = c / sx;
        a.m01 = s / sx;
        a.m10 = -s / sy;
        a.m11 = c / sy;
        a.tx = shx;
        a.ty = shy;
        return a;
    }

    Point apply(double u, double v) const {
        const double cu = u - 0.5 - tx, cv = v - 0.5 - ty;
        return {0.5 + m00 * cu + m01 * cv, 0.5 + m10 * cu + m11 * cv};
    }
};

} // namespace glyph

// Procedural handwritten-digit stand-in: stroke skeletons rasterized with a
// soft pen, per-sample affine jitter and intensity variation. Fully
// deterministic in (seed, sample index); labels balanced round-robin.
template <class S>
Dataset<S> synthetic_digits(std::size_t n, std::uint64_t seed, std::size_t hw = 28) {
    Dataset<S> ds;
    ds.images = Tensor<S>({n, 1, hw, hw});
    ds.labels.resize(n);
    ds.source = "synthetic";
    const auto& glyphs = glyph::digit_strokes();
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x64696769u /*'digi'*/, i));
        const int label = int(i % 10);
        ds.labels[i] = label;
        const auto aff = glyph::Affine::jitter(rng, 0.14, 0.80, 1.12, 0.06);
        const double width = rng.uniform(0.050, 0.075);
        const double ink = rng.uniform(0.82, 1.0);
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t c = 0; c < hw; ++c) {
                // 2x2 supersampling softens stroke edges
                double acc = 0.0;
                for (int su = 0; su < 2; ++su)
                    for (int sv = 0; sv < 2; ++sv) {
                        const double u = (double(c) + 0.25 + 0.5 * su) / double(hw);
                        const double v = (double(r) + 0.25 + 0.5 * sv) / double(hw);
                        const auto [gu, gv] = aff.apply(u, v);
                        const double d = glyph::dist_to_strokes(gu, gv, glyphs[label]);
                        acc += std::exp(-(d * d) / (width * width));
                    }
                const double val = std::clamp(ink * 1.4 * (acc / 4.0), 0.0, 1.0);
                ds.images.at(i, 0, r, c) = S(val);
            }
    }
    return ds;
}

namespace glyph {

// Silhouette intensity (0 = background) for the ten garment classes, unit
// square, y pointing down. Deliberately includes near-confusable tops
// (t-shirt / pullover / coat / shirt) so the classification task is harder
// than the digit fixture, mirroring the relative difficulty of the real pair.
inline double fashion_intensity(int cls, double u, double v) {
    auto in_box = [&](double x0, double y0, double x1, double y1) {
        return u >= x0 && u <= x1 && v >= y0 && v <= y1;
    };
    auto in_ellipse = [&](double cx, double cy, double rx, double ry) {
        const double du = (u - cx) / rx, dv = (v - cy) / ry;
        return du * du + dv * dv <= 1.0;
    };
    switch (cls) {
    case 0: // t-shirt: torso + short sleeves
        if (in_box(0.32, 0.30, 0.68, 0.80)) return 1.0;
        if (in_box(0.18, 0.30, 0.32, 0.48) || in_box(0.68, 0.30, 0.82, 0.48)) return 1.0;
        return 0.0;
    case 1: // trouser: waist + two legs
        if (in_box(0.34, 0.18, 0.66, 0.34)) return 1.0;
        if (in_box(0.34, 0.34, 0.47, 0.85) || in_box(0.53, 0.34, 0.66, 0.85)) return 1.0;
        return 0.0;
    case 2: // pullover: torso + long sleeves
        if (in_box(0.32, 0.28, 0.68, 0.80)) return 1.0;
        if (in_box(0.16, 0.28, 0.32, 0.74) || in_box(0.68, 0.28, 0.84, 0.74)) return 1.0;
        return 0.0;
    case 3: { // dress: trapezoid widening to the hem
        if (v < 0.20 || v > 0.86) return 0.0;
        const double t = (v - 0.20) / 0.66;
        const double half = 0.09 + 0.21 * t;
        return std::abs(u - 0.5) <= half ? 1.0 : 0.0;
    }
    case 4: // coat: pullover body with an open-front gap
        if (in_box(0.48, 0.40, 0.52, 0.80)) return 0.25;
        if (in_box(0.32, 0.26, 0.68, 0.82)) return 1.0;
        if (in_box(0.15, 0.26, 0.32, 0.78) || in_box(0.68, 0.26, 0.85, 0.78)) return 1.0;
        return 0.0;
    case 5: // sandal: sole + straps
        if (in_box(0.20, 0.62, 0.80, 0.71)) return 1.0;
        if (in_box(0.30, 0.48, 0.37, 0.62) || in_box(0.55, 0.44, 0.62, 0.62)) return 0.9;
        return 0.0;
    case 6: // shirt: torso + mid sleeves + bright button line
        if (in_box(0.49, 0.32, 0.51, 0.78)) return 0.45;
        if (in_box(0.32, 0.30, 0.68, 0.80)) return 1.0;
        if (in_box(0.17, 0.30, 0.32, 0.60) || in_box(0.68, 0.30, 0.83, 0.60)) return 1.0;
        return 0.0;
    case 7: { // sneaker: low wedge + sole stripe
        if (in_box(0.18, 0.70, 0.82, 0.76)) return 1.0;
        if (v >= 0.52 && v <= 0.70) {
            const double rise = (0.70 - v) / 0.18; // 0 at sole, 1 at top
            const double x0 = 0.18 + 0.34 * rise;
            if (u >= x0 && u <= 0.82) return 0.85;
        }
        return 0.0;
    }
    case 8: // bag: body + handle ring
        if (in_box(0.28, 0.42, 0.72, 0.80)) return 1.0;
        if (in_ellipse(0.5, 0.42, 0.15, 0.12) && !in_ellipse(0.5, 0.42, 0.09, 0.07) && v <= 0.42)
            return 0.9;
        return 0.0;
    case 9: // ankle boot: shaft + foot
        if (in_box(0.40, 0.24, 0.62, 0.66)) return 1.0;
        if (in_box(0.40, 0.58, 0.80, 0.78)) return 1.0;
        return 0.0;
    default:
        return 0.0;
    }
}

} // namespace glyph

// Procedural garment stand-in: textured silhouettes with affine jitter. The
// texture (fabric-like sinusoid plus pixel noise) gives a harder task than
// the digit fixture.
template <class S>
Dataset<S> synthetic_fashion(std::size_t n, std::uint64_t seed, std::size_t hw = 28) {
    Dataset<S> ds;
    ds.images = Tensor<S>({n, 1, hw, hw});
    ds.labels.resize(n);
    ds.source = "synthetic";
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x66617368u /*'fash'*/, i));
        const int label = int(i % 10);
        ds.labels[i] = label;
        const auto aff = glyph::Affine::jitter(rng, 0.10, 0.82, 1.10, 0.05);
        const double base = rng.uniform(0.55, 0.95);
        const double wave_a = rng.uniform(6.0, 14.0), wave_b = rng.uniform(6.0, 14.0);
        const double phase = rng.uniform(0.0, 6.28318);
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t c = 0; c < hw; ++c) {
                double acc = 0.0;
                for (int su = 0; su < 2; ++su)
                    for (int sv = 0; sv < 2; ++sv) {
                        const double u = (double(c) + 0.25 + 0.5 * su) / double(hw);
                        const double v = (double(r) + 0.25 + 0.5 * sv) / double(hw);
                        const auto [gu, gv] = aff.apply(u, v);
                        acc += glyph::fashion_intensity(label, gu, gv);
                    }
                double val = base * (acc / 4.0);
                if (val > 0.0) {
                    const double tex =
                        0.12 * std::sin(wave_a * double(c) / double(hw) +
                                        wave_b * double(r) / double(hw) + phase);
                    val += tex + 0.06 * rng.normal();
                }
                ds.images.at(i, 0, r, c) = S(std::clamp(val, 0.0, 1.0));
            }
    }
    return ds;
}

} // namespace vac
