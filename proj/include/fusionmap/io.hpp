#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/SVD>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/mlp.hpp"
#include "fusionmap/refinement.hpp"

namespace fusionmap {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

namespace detail {

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

inline std::string where(const fs::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t j = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > j) out.push_back(s.substr(j, i - j));
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- PLY (ASCII)

inline void write_ply(const fs::path& path, const PointCloud& cloud) {
    auto out = detail::open_out(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const auto& p : cloud.points)
        out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

/// Reads an ASCII PLY whose vertex element carries x, y, z (extra properties are ignored).
inline PointCloud read_ply(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != "ply") throw DataError(detail::where(path, 1) + "missing 'ply' magic");
    if (!next() || line.rfind("format ascii", 0) != 0)
        throw DataError(detail::where(path, lineno) + "only 'format ascii 1.0' is supported");

    long long vertices = -1;
    bool in_vertex = false;
    std::vector<std::string> props;
    bool header_done = false;
    while (next()) {
        const auto tok = detail::split_ws(line);
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") {
            header_done = true;
            break;
        }
        if (tok[0] == "element") {
            if (tok.size() != 3) throw DataError(detail::where(path, lineno) + "malformed element line");
            in_vertex = tok[1] == "vertex";
            if (in_vertex) {
                double n = 0;
                if (!parse_double(tok[2], n) || n < 0 || n != std::floor(n))
                    throw DataError(detail::where(path, lineno) + "bad vertex count");
                vertices = static_cast<long long>(n);
            } else {
                double n = 0;
                if (!parse_double(tok[2], n) || n != 0)
                    throw DataError(detail::where(path, lineno) + "only a vertex element is supported");
            }
        } else if (tok[0] == "property") {
            if (tok.size() != 3) throw DataError(detail::where(path, lineno) + "malformed property line");
            if (in_vertex) props.emplace_back(tok[2]);
        } else {
            throw DataError(detail::where(path, lineno) + "unexpected header line '" + line + "'");
        }
    }
    if (!header_done) throw DataError(detail::where(path, lineno) + "header has no end_header");
    if (vertices < 0) throw DataError(detail::where(path, lineno) + "header declares no vertex element");
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t i = 0; i < props.size(); ++i) {
        if (props[i] == "x") ix = static_cast<int>(i);
        if (props[i] == "y") iy = static_cast<int>(i);
        if (props[i] == "z") iz = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw DataError(path.string() + ": vertex element lacks x, y, z properties");

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertices));
    while (static_cast<long long>(cloud.size()) < vertices && next()) {
        const auto tok = detail::split_ws(line);
        if (tok.size() != props.size())
            throw DataError(detail::where(path, lineno) + "expected " + std::to_string(props.size()) +
                            " values, found " + std::to_string(tok.size()));
        Vec3 p;
        if (!parse_double(tok[ix], p.x()) || !parse_double(tok[iy], p.y()) || !parse_double(tok[iz], p.z()))
            throw DataError(detail::where(path, lineno) + "non-numeric vertex value");
        cloud.points.push_back(p);
    }
    if (static_cast<long long>(cloud.size()) != vertices)
        throw DataError(detail::where(path, lineno) + "expected " + std::to_string(vertices) + " vertices, found " +
                        std::to_string(cloud.size()));
    while (next())
        if (!detail::split_ws(line).empty())
            throw DataError(detail::where(path, lineno) + "trailing data after " + std::to_string(vertices) +
                            " vertices");
    return cloud;
}

// ---------------------------------------------------------------- PFM (grayscale)

/// Grayscale portable float map, little-endian (negative scale), rows stored bottom to top.
template <class Tag>
void write_pfm(const fs::path& path, const Image<Tag>& img) {
    auto out = detail::open_out(path, std::ios::binary);
    out << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
    std::vector<char> row(static_cast<std::size_t>(img.width) * 4);
    for (int v = img.height - 1; v >= 0; --v) {
        for (int u = 0; u < img.width; ++u) {
            auto bits = std::bit_cast<std::uint32_t>(img.at(u, v));
            for (int b = 0; b < 4; ++b) row[static_cast<std::size_t>(u) * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("failed writing " + path.string());
}

template <class Tag>
Image<Tag> read_pfm(const fs::path& path) {
    auto in = detail::open_in(path, std::ios::binary);
    auto token = [&]() {
        std::string t;
        char c;
        while (in.get(c) && std::isspace(static_cast<unsigned char>(c))) {}
        if (in) t.push_back(c);
        while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
        return t;
    };
    const std::string magic = token();
    if (magic != "Pf") throw DataError(path.string() + ": bad PFM magic '" + magic + "' (expected grayscale 'Pf')");
    double w = 0, h = 0, scale = 0;
    if (!parse_double(token(), w) || !parse_double(token(), h) || !parse_double(token(), scale) || w < 0 || h < 0 ||
        w != std::floor(w) || h != std::floor(h) || scale == 0.0)
        throw DataError(path.string() + ": malformed PFM header");
    // The single whitespace after the scale has been consumed by token().
    Image<Tag> img(static_cast<int>(w), static_cast<int>(h));
    const bool little = scale < 0.0;
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 4);
    for (int v = img.height - 1; v >= 0; --v) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (in.gcount() != static_cast<std::streamsize>(row.size()))
            throw DataError(path.string() + ": PFM data shorter than " + std::to_string(img.width) + "x" +
                            std::to_string(img.height));
        for (int u = 0; u < img.width; ++u) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int shift = little ? 8 * b : 8 * (3 - b);
                bits |= static_cast<std::uint32_t>(row[static_cast<std::size_t>(u) * 4 + b]) << shift;
            }
            img.at(u, v) = std::bit_cast<float>(bits);
        }
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError(path.string() + ": PFM data longer than " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
    return img;
}

/// Reads a depth image and rejects negative or non-finite values.
inline DepthImage read_depth_pfm(const fs::path& path) {
    DepthImage d = read_pfm<DepthTag>(path);
    validate_depth_values(d);
    return d;
}

// ---------------------------------------------------------------- laser scan CSV

inline void write_scan(const fs::path& path, const LaserScan2D& scan) {
    auto out = detail::open_out(path);
    out << "mount_height=" << format_double(scan.mount_height) << '\n';
    for (const auto& p : scan.points)
        out << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z()) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

inline LaserScan2D read_scan(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    LaserScan2D scan;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            constexpr std::string_view key = "mount_height=";
            if (line.rfind(key, 0) != 0 || !parse_double(std::string_view(line).substr(key.size()), scan.mount_height))
                throw DataError(detail::where(path, lineno) + "expected header 'mount_height=<meters>'");
            header = true;
            continue;
        }
        std::array<double, 3> v{};
        std::string_view rest = line;
        for (int c = 0; c < 3; ++c) {
            const auto comma = rest.find(',');
            if ((c < 2) == (comma == std::string_view::npos))
                throw DataError(detail::where(path, lineno) + "expected three comma-separated values");
            if (!parse_double(rest.substr(0, comma), v[c]))
                throw DataError(detail::where(path, lineno) + "non-numeric field");
            rest = c < 2 ? rest.substr(comma + 1) : std::string_view{};
        }
        scan.points.emplace_back(v[0], v[1], v[2]);
    }
    if (!header) throw DataError(path.string() + ": missing 'mount_height=' header");
    if (scan.points.empty()) throw DataError(path.string() + ": scan contains no returns");
    try {
        scan.validate();
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return scan;
}

// ---------------------------------------------------------------- poses (3x4 row-major per line)

inline void write_poses(const fs::path& path, const std::vector<Pose>& poses) {
    auto out = detail::open_out(path);
    for (const auto& p : poses) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) out << format_double(p.rotation(r, c)) << ' ';
            out << format_double(p.translation[r]) << (r < 2 ? ' ' : '\n');
        }
    }
    if (!out) throw DataError("failed writing " + path.string());
}

/// Rotations that drift from orthonormal by at most 1e-3 are projected back onto SO(3).
inline std::vector<Pose> read_poses(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<Pose> poses;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 12)
            throw DataError(detail::where(path, lineno) + "expected 12 numbers, found " + std::to_string(tok.size()));
        Pose p;
        for (int i = 0; i < 12; ++i) {
            double v = 0;
            if (!parse_double(tok[i], v)) throw DataError(detail::where(path, lineno) + "non-numeric pose entry");
            if (i % 4 == 3)
                p.translation[i / 4] = v;
            else
                p.rotation(i / 4, i % 4) = v;
        }
        const double drift = (p.rotation * p.rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (drift > 1e-3 || p.rotation.determinant() <= 0.0)
            throw DataError(detail::where(path, lineno) + "rotation is not orthonormal");
        if (drift > 0.0) {
            Eigen::JacobiSVD<Mat3> svd(p.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
            p.rotation = svd.matrixU() * svd.matrixV().transpose();
        }
        poses.push_back(p);
    }
    return poses;
}

// ---------------------------------------------------------------- camera intrinsics + extrinsic

inline void write_camera(const fs::path& path, const CameraModel& cam) {
    auto out = detail::open_out(path);
    out << "fx=" << format_double(cam.fx) << "\nfy=" << format_double(cam.fy) << "\ncx=" << format_double(cam.cx)
        << "\ncy=" << format_double(cam.cy) << "\nwidth=" << cam.width << "\nheight=" << cam.height << "\nextrinsic=";
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            out << format_double(c < 3 ? cam.extrinsic.rotation(r, c) : cam.extrinsic.translation[r]);
            out << (r == 2 && c == 3 ? '\n' : ' ');
        }
    if (!out) throw DataError("failed writing " + path.string());
}

inline CameraModel read_camera(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    CameraModel cam;
    int seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(detail::where(path, lineno) + "expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string_view val = std::string_view(line).substr(eq + 1);
        double v = 0;
        if (key == "extrinsic") {
            const auto tok = detail::split_ws(val);
            if (tok.size() != 12) throw DataError(detail::where(path, lineno) + "extrinsic needs 12 numbers");
            for (int i = 0; i < 12; ++i) {
                if (!parse_double(tok[i], v)) throw DataError(detail::where(path, lineno) + "non-numeric extrinsic");
                if (i % 4 == 3)
                    cam.extrinsic.translation[i / 4] = v;
                else
                    cam.extrinsic.rotation(i / 4, i % 4) = v;
            }
        } else {
            if (!parse_double(val, v)) throw DataError(detail::where(path, lineno) + "non-numeric value for " + key);
            if (key == "fx") cam.fx = v;
            else if (key == "fy") cam.fy = v;
            else if (key == "cx") cam.cx = v;
            else if (key == "cy") cam.cy = v;
            else if (key == "width") cam.width = static_cast<int>(v);
            else if (key == "height") cam.height = static_cast<int>(v);
            else throw DataError(detail::where(path, lineno) + "unknown camera key '" + key + "'");
        }
        ++seen;
    }
    if (seen != 7) throw DataError(path.string() + ": camera file needs fx, fy, cx, cy, width, height, extrinsic");
    cam.validate();
    return cam;
}

// ---------------------------------------------------------------- refinement model
//
// Text format:
//   PLREFINE1
//   k <k>
//   head xy|z
//   activation <name> <leaky slope>
//   layers <count> <size_0> ... <size_count>
//   then per layer: one line of out*in row-major weights, one line of out biases
//
// Numbers use the shortest round-trip decimal form, so save/load is exact.

inline constexpr std::string_view kModelMagic = "PLREFINE1";

namespace detail {

inline void write_head(std::ostream& out, std::string_view name, const Mlp& m) {
    out << "head " << name << "\nactivation " << to_string(m.activation) << ' ' << format_double(m.leaky_slope)
        << "\nlayers " << m.layers();
    for (int s : m.sizes()) out << ' ' << s;
    out << '\n';
    for (std::size_t l = 0; l < m.layers(); ++l) {
        const Matrix& w = m.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) out << (r + c ? " " : "") << format_double(w(r, c));
        out << '\n';
        for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) out << (r ? " " : "") << format_double(m.biases[l][r]);
        out << '\n';
    }
}

class TokenReader {
public:
    TokenReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    std::string word() {
        std::string t;
        if (!(in_ >> t)) throw DataError(source_ + ": unexpected end of model file");
        return t;
    }

    double number() {
        const std::string t = word();
        double v = 0;
        if (!parse_double(t, v)) throw DataError(source_ + ": bad number '" + t + "' in model file");
        return v;
    }

    long integer() {
        const double v = number();
        if (v != std::floor(v) || v < 0) throw DataError(source_ + ": expected a non-negative integer");
        return static_cast<long>(v);
    }

    void expect(std::string_view w) {
        const std::string t = word();
        if (t != w) throw DataError(source_ + ": expected '" + std::string(w) + "', found '" + t + "'");
    }

private:
    std::istream& in_;
    std::string source_;
};

inline Mlp read_head(TokenReader& r, std::string_view name) {
    r.expect("head");
    r.expect(name);
    r.expect("activation");
    Mlp m;
    m.activation = activation_from_string(r.word());
    m.leaky_slope = r.number();
    r.expect("layers");
    const long layers = r.integer();
    if (layers < 1 || layers > 64) throw DataError("model head has an invalid layer count");
    std::vector<long> sizes;
    for (long i = 0; i <= layers; ++i) {
        sizes.push_back(r.integer());
        if (sizes.back() < 1 || sizes.back() > (1 << 20)) throw DataError("model head has an invalid layer size");
    }
    for (long l = 0; l < layers; ++l) {
        Matrix w(sizes[l + 1], sizes[l]);
        for (Eigen::Index rr = 0; rr < w.rows(); ++rr)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(rr, c) = r.number();
        Vector b(sizes[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = r.number();
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    return m;
}

}  // namespace detail

inline void save_model(const fs::path& path, const RefinementModel& model) {
    model.validate();
    auto out = detail::open_out(path);
    out << kModelMagic << "\nk " << model.k << '\n';
    detail::write_head(out, "xy", model.xy);
    detail::write_head(out, "z", model.z);
    if (!out) throw DataError("failed writing " + path.string());
}

inline RefinementModel load_model(const fs::path& path) {
    auto in = detail::open_in(path);
    detail::TokenReader r(in, path.string());
    const std::string magic = r.word();
    if (magic != kModelMagic) throw DataError(path.string() + ": not a " + std::string(kModelMagic) + " model file");
    RefinementModel m;
    r.expect("k");
    m.k = static_cast<int>(r.integer());
    m.xy = detail::read_head(r, "xy");
    m.z = detail::read_head(r, "z");
    m.validate();
    return m;
}

}  // namespace fusionmap
