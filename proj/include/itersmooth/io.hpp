#pragma once

// CSV readers and writers for sensor logs, ground truth and estimator output.
//
// Numbers are written in the shortest form that parses back to the same
// double, so a write/read cycle is lossless. Every file is written to a
// temporary sibling and renamed into place.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "itersmooth/bmfls.hpp"
#include "itersmooth/errors.hpp"
#include "itersmooth/gating.hpp"
#include "itersmooth/iterative.hpp"
#include "itersmooth/strapdown.hpp"

namespace itersmooth::io {

inline constexpr std::string_view kImuHeader = "t,fx,fy,fz,wx,wy,wz";
inline constexpr std::string_view kMeasHeader = "t,x,y,z,roll,pitch,yaw,marker_id";
inline constexpr std::string_view kTruthHeader = "t,px,py,pz,vx,vy,vz,roll,pitch,yaw";
inline constexpr std::string_view kTrueLabelsHeader = "index,t,label,offset_x,offset_y,offset_z";
inline constexpr std::string_view kLabelsHeader = "index,t,d,label";
inline constexpr std::string_view kTrajectoryHeader =
    "t,px,py,pz,vx,vy,vz,roll,pitch,yaw,"
    "var_px,var_py,var_pz,var_vx,var_vy,var_vz,var_roll,var_pitch,var_yaw";

/// One planted label with its position offset.
struct TrueLabel {
    std::size_t index = 0;
    double t = 0.0;
    Label label = Label::Inlier;
    Vec3 offset = Vec3::Zero();
};

struct LabelRow {
    std::size_t index = 0;
    double t = 0.0;
    double d = 0.0;
    Label label = Label::Inlier;
};

namespace detail {

inline void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

template <class Int>
void append_int(std::string& out, Int v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

inline void append_row(std::string& out, double t, const Eigen::Ref<const Eigen::VectorXd>& v) {
    append_double(out, t);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(',');
        append_double(out, v[i]);
    }
    out.push_back('\n');
}

/// Writes `content` to `path` via a temporary file and an atomic rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        f.flush();
        if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Splits file content into lines; a trailing newline does not start a new line.
inline std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t c = line.find(',', pos);
        fields.push_back(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos));
        if (c == std::string_view::npos) break;
        pos = c + 1;
    }
    return fields;
}

class CsvReader {
public:
    CsvReader(const std::filesystem::path& path, std::string_view header, std::size_t n_fields)
        : path_(path.string()), text_(read_file(path)), n_fields_(n_fields) {
        lines_ = lines_of(text_);
        if (lines_.empty()) return;
        if (lines_[0] != header)
            throw ParseError(path_, 1, "expected header '" + std::string(header) + "'");
    }

    /// Data rows, each with its 1-based file line number. Blank lines are skipped.
    template <class Fn>
    void for_each_row(Fn&& fn) const {
        for (std::size_t i = 1; i < lines_.size(); ++i) {
            if (lines_[i].empty()) continue;
            const auto fields = split(lines_[i]);
            if (fields.size() != n_fields_)
                throw ParseError(path_, i + 1,
                                 "expected " + std::to_string(n_fields_) + " fields, got " +
                                     std::to_string(fields.size()));
            fn(fields, i + 1);
        }
    }

    double number(std::string_view s, std::size_t line) const {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
            throw ParseError(path_, line, "invalid number '" + std::string(s) + "'");
        return v;
    }

    template <class Int>
    Int integer(std::string_view s, std::size_t line) const {
        Int v{};
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ParseError(path_, line, "invalid integer '" + std::string(s) + "'");
        return v;
    }

    Label label(std::string_view s, std::size_t line) const {
        if (s == "inlier") return Label::Inlier;
        if (s == "outlier") return Label::Outlier;
        throw ParseError(path_, line, "invalid label '" + std::string(s) + "'");
    }

    void require_increasing(double prev, double t, bool first, std::size_t line) const {
        if (!first && !(t > prev))
            throw ParseError(path_, line, "timestamps must be strictly increasing");
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string text_;
    std::vector<std::string_view> lines_;
    std::size_t n_fields_;
};

}  // namespace detail

inline std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kImuHeader, 7);
    std::vector<ImuSample> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        ImuSample u;
        u.t = r.number(f[0], line);
        for (int i = 0; i < 3; ++i) {
            u.f_b[i] = r.number(f[1 + i], line);
            u.w_b[i] = r.number(f[4 + i], line);
        }
        r.require_increasing(out.empty() ? 0.0 : out.back().t, u.t, out.empty(), line);
        out.push_back(u);
    });
    return out;
}

inline void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& imu) {
    std::string s(kImuHeader);
    s.push_back('\n');
    for (const auto& u : imu) {
        Vec6 v;
        v << u.f_b, u.w_b;
        detail::append_row(s, u.t, v);
    }
    detail::write_file_atomic(path, s);
}

/// Angles are wrapped to (-pi, pi] on load. An empty file is a valid empty list.
inline std::vector<PoseMeasurement> read_meas_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kMeasHeader, 8);
    std::vector<PoseMeasurement> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        PoseMeasurement z;
        z.t = r.number(f[0], line);
        Vec3 e;
        for (int i = 0; i < 3; ++i) {
            z.position[i] = r.number(f[1 + i], line);
            e[i] = r.number(f[4 + i], line);
        }
        z.euler = wrap_angles(EulerAngles::from_vector(e));
        z.marker_id = r.integer<int>(f[7], line);
        r.require_increasing(out.empty() ? 0.0 : out.back().t, z.t, out.empty(), line);
        out.push_back(z);
    });
    return out;
}

inline void write_meas_csv(const std::filesystem::path& path, const std::vector<PoseMeasurement>& meas) {
    std::string s(kMeasHeader);
    s.push_back('\n');
    for (const auto& z : meas) {
        detail::append_double(s, z.t);
        for (int i = 0; i < 6; ++i) {
            s.push_back(',');
            detail::append_double(s, z.vector()[i]);
        }
        s.push_back(',');
        detail::append_int(s, z.marker_id);
        s.push_back('\n');
    }
    detail::write_file_atomic(path, s);
}

inline std::vector<StampedState> read_truth_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kTruthHeader, 10);
    std::vector<StampedState> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        StampedState st;
        st.t = r.number(f[0], line);
        Vec9 x;
        for (int i = 0; i < 9; ++i) x[i] = r.number(f[1 + i], line);
        st.x = NavState::from_vector(x);
        r.require_increasing(out.empty() ? 0.0 : out.back().t, st.t, out.empty(), line);
        out.push_back(st);
    });
    return out;
}

inline void write_truth_csv(const std::filesystem::path& path, const std::vector<StampedState>& truth) {
    std::string s(kTruthHeader);
    s.push_back('\n');
    for (const auto& st : truth) detail::append_row(s, st.t, st.x.vector());
    detail::write_file_atomic(path, s);
}

inline std::vector<TrueLabel> read_true_labels_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kTrueLabelsHeader, 6);
    std::vector<TrueLabel> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        TrueLabel l;
        l.index = r.integer<std::size_t>(f[0], line);
        if (l.index != out.size()) throw ParseError(r.path(), line, "indices must run 0, 1, 2, ...");
        l.t = r.number(f[1], line);
        l.label = r.label(f[2], line);
        for (int i = 0; i < 3; ++i) l.offset[i] = r.number(f[3 + i], line);
        out.push_back(l);
    });
    return out;
}

inline void write_true_labels_csv(const std::filesystem::path& path, const std::vector<TrueLabel>& labels) {
    std::string s(kTrueLabelsHeader);
    s.push_back('\n');
    for (const auto& l : labels) {
        detail::append_int(s, l.index);
        s.push_back(',');
        detail::append_double(s, l.t);
        s.push_back(',');
        s.append(to_string(l.label));
        for (int i = 0; i < 3; ++i) {
            s.push_back(',');
            detail::append_double(s, l.offset[i]);
        }
        s.push_back('\n');
    }
    detail::write_file_atomic(path, s);
}

inline std::vector<TrajectoryPoint> read_trajectory_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kTrajectoryHeader, 19);
    std::vector<TrajectoryPoint> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        TrajectoryPoint pt;
        pt.t = r.number(f[0], line);
        Vec9 x;
        for (int i = 0; i < 9; ++i) {
            x[i] = r.number(f[1 + i], line);
            pt.var[i] = r.number(f[10 + i], line);
        }
        pt.x = NavState::from_vector(x);
        out.push_back(pt);
    });
    return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryPoint>& traj) {
    std::string s(kTrajectoryHeader);
    s.push_back('\n');
    for (const auto& pt : traj) {
        Eigen::Matrix<double, 18, 1> v;
        v << pt.x.vector(), pt.var;
        detail::append_row(s, pt.t, v);
    }
    detail::write_file_atomic(path, s);
}

inline std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path) {
    detail::CsvReader r(path, kLabelsHeader, 4);
    std::vector<LabelRow> out;
    r.for_each_row([&](const auto& f, std::size_t line) {
        LabelRow l;
        l.index = r.integer<std::size_t>(f[0], line);
        if (l.index != out.size()) throw ParseError(r.path(), line, "indices must run 0, 1, 2, ...");
        l.t = r.number(f[1], line);
        l.d = r.number(f[2], line);
        l.label = r.label(f[3], line);
        out.push_back(l);
    });
    return out;
}

inline void write_labels_csv(const std::filesystem::path& path, const std::vector<GatingRecord>& records) {
    std::string s(kLabelsHeader);
    s.push_back('\n');
    for (const auto& rec : records) {
        detail::append_int(s, rec.meas_index);
        s.push_back(',');
        detail::append_double(s, rec.t);
        s.push_back(',');
        detail::append_double(s, rec.d);
        s.push_back(',');
        s.append(to_string(rec.c));
        s.push_back('\n');
    }
    detail::write_file_atomic(path, s);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    detail::write_file_atomic(path, text);
}

}  // namespace itersmooth::io
