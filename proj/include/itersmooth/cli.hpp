#pragma once

// Configuration loading and the generate / run / eval commands.
//
// A run is described by one flat JSON document whose keys carry their units.
// Command-line overrides are applied on top of the loaded file and the result
// is validated as a whole.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "itersmooth/errors.hpp"
#include "itersmooth/gating.hpp"
#include "itersmooth/io.hpp"
#include "itersmooth/iterative.hpp"
#include "itersmooth/synthdata.hpp"

namespace itersmooth::cli {

/// Process exit status contract.
enum ExitCode : int {
    kExitConverged = 0,
    kExitError = 1,
    kExitNotConverged = 2,
    kExitDiverged = 3,
};

/// Largest accepted lag. The window covariance grows as (9 (N + 1))^2 doubles,
/// about 160 MB at this bound.
inline constexpr int kMaxLag = 500;

struct RunConfig {
    SmootherConfig smoother;
    ScenarioConfig scenario;
    std::filesystem::path data_dir = "data";
    std::filesystem::path output_dir = "out";

    void validate() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> lag;
    std::optional<double> chi2_p;
    std::optional<int> max_iterations;
    std::optional<std::filesystem::path> data_dir;
    std::optional<std::filesystem::path> output_dir;
};

namespace detail {

using nlohmann::json;

class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& key, const std::string& what)
        : InvalidArgument("config key '" + key + "': " + what) {}
};

inline double number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(key, "must be finite");
    return x;
}

inline long long integer(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<long long>();
}

inline bool boolean(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
    return v.get<bool>();
}

inline std::string text(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
}

inline Vec3 vec3(const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(key, "expected an array of 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) out[i] = number(v[static_cast<std::size_t>(i)], key);
    return out;
}

inline std::vector<Vec3> vec3_list(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError(key, "expected an array of [x, y, z] triples");
    std::vector<Vec3> out;
    for (const auto& e : v) out.push_back(vec3(e, key));
    return out;
}

inline json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

inline void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

inline bool all_positive(const Vec3& v) { return (v.array() > 0.0).all(); }
inline bool all_non_negative(const Vec3& v) { return (v.array() >= 0.0).all(); }

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> m;
        m["lag_steps"] = [](RunConfig& c, const json& v, const std::string& k) {
            const long long n = integer(v, k);
            require(n >= 0 && n <= kMaxLag, k, "must lie in [0, " + std::to_string(kMaxLag) + "]");
            c.smoother.lag = static_cast<int>(n);
        };
        m["chi2_p"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.gate.p = number(v, k);
        };
        m["max_iterations"] = [](RunConfig& c, const json& v, const std::string& k) {
            const long long n = integer(v, k);
            require(n >= 1 && n <= 1000, k, "must lie in [1, 1000]");
            c.smoother.max_iterations = static_cast<int>(n);
        };
        m["max_pos_var_m2"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.max_pos_var = number(v, k);
        };
        m["max_consec_rejections"] = [](RunConfig& c, const json& v, const std::string& k) {
            const long long n = integer(v, k);
            require(n >= 1 && n <= std::numeric_limits<int>::max(), k, "must be >= 1");
            c.smoother.max_consec_rejections = static_cast<int>(n);
        };
        m["monotone_removal"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.monotone_removal = boolean(v, k);
        };
        m["g_matrix_faithful"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.model.gyro_mapping = boolean(v, k) ? GyroNoiseMapping::Dcm : GyroNoiseMapping::EulerRate;
        };
        m["gimbal_eps_rad"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.model.gimbal_eps = number(v, k);
        };
        m["q_accel_mps2_rthz"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.noise.q_sigmas.head<3>() = vec3(v, k);
        };
        m["q_gyro_rads_rthz"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.noise.q_sigmas.tail<3>() = vec3(v, k);
        };
        m["sigma_pos_m"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.noise.r_sigmas.head<3>() = vec3(v, k);
        };
        m["sigma_euler_rad"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.noise.r_sigmas.tail<3>() = vec3(v, k);
        };
        m["p0_pos_m"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.p0_sigmas.segment<3>(0) = vec3(v, k);
        };
        m["p0_vel_mps"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.p0_sigmas.segment<3>(3) = vec3(v, k);
        };
        m["p0_euler_rad"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.smoother.p0_sigmas.segment<3>(6) = vec3(v, k);
        };
        m["duration_s"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.duration = number(v, k); };
        m["imu_rate_hz"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.imu_rate = number(v, k); };
        m["cam_rate_hz"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.cam_rate = number(v, k); };
        m["hover_center_m"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.hover_center = vec3(v, k); };
        m["hover_amp_m"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.hover_amp = vec3(v, k); };
        m["hover_freq_hz"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.hover_freq = vec3(v, k); };
        m["euler_center_rad"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.euler_center = vec3(v, k); };
        m["euler_amp_rad"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.euler_amp = vec3(v, k); };
        m["euler_freq_hz"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.euler_freq = vec3(v, k); };
        m["imu_noise_accel_mps2"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.imu_noise.head<3>() = vec3(v, k);
        };
        m["imu_noise_gyro_rads"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.imu_noise.tail<3>() = vec3(v, k);
        };
        m["meas_noise_pos_m"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.meas_noise.head<3>() = vec3(v, k);
        };
        m["meas_noise_euler_rad"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.meas_noise.tail<3>() = vec3(v, k);
        };
        m["outlier_rate"] = [](RunConfig& c, const json& v, const std::string& k) { c.scenario.outlier_rate = number(v, k); };
        m["outlier_offsets_m"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.outlier_offsets = vec3_list(v, k);
        };
        m["outlier_offsets_rad"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.outlier_euler_offsets = vec3_list(v, k);
        };
        m["burst_mean_frames"] = [](RunConfig& c, const json& v, const std::string& k) {
            c.scenario.burst_mean = number(v, k);
        };
        m["burst_max_frames"] = [](RunConfig& c, const json& v, const std::string& k) {
            const long long n = integer(v, k);
            require(n >= 1, k, "must be >= 1");
            c.scenario.burst_max = static_cast<std::size_t>(n);
        };
        m["rng_seed"] = [](RunConfig& c, const json& v, const std::string& k) {
            require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), k,
                    "expected a non-negative integer");
            c.scenario.rng_seed = v.get<std::uint64_t>();
        };
        m["data_dir"] = [](RunConfig& c, const json& v, const std::string& k) { c.data_dir = text(v, k); };
        m["output_dir"] = [](RunConfig& c, const json& v, const std::string& k) { c.output_dir = text(v, k); };
        return m;
    }();
    return table;
}

}  // namespace detail

inline void RunConfig::validate() const {
    using detail::require;
    const auto& s = smoother;
    require(s.lag >= 0 && s.lag <= kMaxLag, "lag_steps", "must lie in [0, " + std::to_string(kMaxLag) + "]");
    require(s.gate.p > 0.0 && s.gate.p <= 1.0, "chi2_p", "must lie in (0, 1]");
    require(s.max_iterations >= 1, "max_iterations", "must be >= 1");
    require(s.max_pos_var > 0.0, "max_pos_var_m2", "must be > 0");
    require(s.max_consec_rejections >= 1, "max_consec_rejections", "must be >= 1");
    require(s.model.gimbal_eps > 0.0 && s.model.gimbal_eps < 0.5 * kPi, "gimbal_eps_rad", "must lie in (0, pi/2)");
    require(detail::all_positive(s.noise.q_sigmas.head<3>()), "q_accel_mps2_rthz", "must be > 0");
    require(detail::all_positive(s.noise.q_sigmas.tail<3>()), "q_gyro_rads_rthz", "must be > 0");
    require(detail::all_positive(s.noise.r_sigmas.head<3>()), "sigma_pos_m", "must be > 0");
    require(detail::all_positive(s.noise.r_sigmas.tail<3>()), "sigma_euler_rad", "must be > 0");
    require(detail::all_positive(s.p0_sigmas.segment<3>(0)), "p0_pos_m", "must be > 0");
    require(detail::all_positive(s.p0_sigmas.segment<3>(3)), "p0_vel_mps", "must be > 0");
    require(detail::all_positive(s.p0_sigmas.segment<3>(6)), "p0_euler_rad", "must be > 0");

    const auto& sc = scenario;
    require(sc.duration > 0.0, "duration_s", "must be > 0");
    require(sc.imu_rate > 0.0, "imu_rate_hz", "must be > 0");
    require(sc.cam_rate > 0.0 && sc.cam_rate <= sc.imu_rate, "cam_rate_hz", "must lie in (0, imu_rate_hz]");
    require(detail::all_non_negative(sc.hover_amp), "hover_amp_m", "must be >= 0");
    require(detail::all_non_negative(sc.hover_freq), "hover_freq_hz", "must be >= 0");
    require(detail::all_non_negative(sc.euler_amp), "euler_amp_rad", "must be >= 0");
    require(detail::all_non_negative(sc.euler_freq), "euler_freq_hz", "must be >= 0");
    require(std::abs(sc.euler_center[1]) + sc.euler_amp[1] < 0.5 * kPi - s.model.gimbal_eps, "euler_amp_rad",
            "pitch excursion reaches gimbal lock");
    require(detail::all_non_negative(sc.imu_noise.head<3>()), "imu_noise_accel_mps2", "must be >= 0");
    require(detail::all_non_negative(sc.imu_noise.tail<3>()), "imu_noise_gyro_rads", "must be >= 0");
    require(detail::all_non_negative(sc.meas_noise.head<3>()), "meas_noise_pos_m", "must be >= 0");
    require(detail::all_non_negative(sc.meas_noise.tail<3>()), "meas_noise_euler_rad", "must be >= 0");
    require(sc.outlier_rate >= 0.0 && sc.outlier_rate < 1.0, "outlier_rate", "must lie in [0, 1)");
    require(sc.outlier_rate == 0.0 || !sc.outlier_offsets.empty(), "outlier_offsets_m",
            "needs at least one offset when outlier_rate > 0");
    require(sc.outlier_euler_offsets.empty() || sc.outlier_euler_offsets.size() == sc.outlier_offsets.size(),
            "outlier_offsets_rad", "must be empty or pair with outlier_offsets_m");
    require(sc.burst_mean >= 1.0, "burst_mean_frames", "must be >= 1");
    require(sc.burst_max >= 1, "burst_max_frames", "must be >= 1");
    require(!data_dir.empty(), "data_dir", "must not be empty");
    require(!output_dir.empty(), "output_dir", "must not be empty");
}

/// Builds a config from a parsed JSON object. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
    RunConfig c;
    const auto& table = detail::setters();
    for (const auto& [key, value] : j.items()) {
        const auto it = table.find(key);
        if (it == table.end()) throw InvalidArgument("config: unknown key '" + key + "'");
        it->second(c, value, key);
    }
    c.validate();
    c.smoother.gate = GateConfig::make(6, c.smoother.gate.p);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    const std::string content = io::detail::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

inline void apply_overrides(RunConfig& c, const Overrides& o) {
    if (o.seed) c.scenario.rng_seed = *o.seed;
    if (o.lag) c.smoother.lag = *o.lag;
    if (o.chi2_p) c.smoother.gate.p = *o.chi2_p;
    if (o.max_iterations) c.smoother.max_iterations = *o.max_iterations;
    if (o.data_dir) c.data_dir = *o.data_dir;
    if (o.output_dir) c.output_dir = *o.output_dir;
    c.validate();
    c.smoother.gate = GateConfig::make(6, c.smoother.gate.p);
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline std::filesystem::path pass_file(const std::filesystem::path& dir, const char* stem, std::size_t pass) {
    return dir / (std::string(stem) + "_" + std::to_string(pass) + ".csv");
}

inline json metrics_json(const Metrics& m) {
    return {{"pos_rmse", m.pos_rmse}, {"euler_rmse", m.euler_rmse}, {"precision", m.precision}, {"recall", m.recall}};
}

inline std::vector<Label> labels_only(const std::vector<io::TrueLabel>& rows) {
    std::vector<Label> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.label);
    return out;
}

}  // namespace detail

/// Writes imu.csv, meas.csv, truth.csv and labels_true.csv into data_dir.
inline int cmd_generate(const RunConfig& cfg) {
    const LabeledDataset lds = generate_dataset(cfg.scenario, cfg.smoother.model);
    detail::ensure_dir(cfg.data_dir);
    io::write_imu_csv(cfg.data_dir / "imu.csv", lds.data.imu);
    io::write_meas_csv(cfg.data_dir / "meas.csv", lds.data.meas);
    io::write_truth_csv(cfg.data_dir / "truth.csv", *lds.data.ground_truth);

    std::vector<io::TrueLabel> labels(lds.data.meas.size());
    for (std::size_t j = 0; j < labels.size(); ++j)
        labels[j] = {j, lds.data.meas[j].t, (*lds.data.true_labels)[j], lds.planted_offsets[j]};
    io::write_true_labels_csv(cfg.data_dir / "labels_true.csv", labels);
    return kExitConverged;
}

/// Loads data_dir, truth and planted labels included when present.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.imu = io::read_imu_csv(dir / "imu.csv");
    ds.meas = io::read_meas_csv(dir / "meas.csv");
    if (std::filesystem::exists(dir / "truth.csv")) ds.ground_truth = io::read_truth_csv(dir / "truth.csv");
    if (std::filesystem::exists(dir / "labels_true.csv"))
        ds.true_labels = detail::labels_only(io::read_true_labels_csv(dir / "labels_true.csv"));
    ds.validate();
    return ds;
}

/// Runs the iterative smoother over data_dir and writes per-pass files and
/// report.json into output_dir. Returns the process exit status.
inline int cmd_run(const RunConfig& cfg) {
    const Dataset ds = load_dataset(cfg.data_dir);
    const IterationReport rep = iterate(ds, cfg.smoother);

    detail::ensure_dir(cfg.output_dir);
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.passes.size(); ++i) {
        const PassResult& pass = rep.passes[i];
        io::write_trajectory_csv(detail::pass_file(cfg.output_dir, "trajectory", i + 1), pass.trajectory);
        io::write_labels_csv(detail::pass_file(cfg.output_dir, "labels", i + 1), pass.records);
        counts.push_back(pass.inlier_set.size());
    }

    nlohmann::json report;
    report["converged"] = rep.converged;
    report["iterations_used"] = rep.iterations_used;
    report["inlier_counts"] = counts;
    report["metrics"] = nullptr;
    if (ds.ground_truth && !rep.passes.empty()) report["metrics"] = detail::metrics_json(evaluate(rep, ds));
    report["divergence"] = nullptr;
    if (rep.divergence) {
        const DivergenceInfo& d = *rep.divergence;
        report["divergence"] = {{"pass", d.pass}, {"epoch", d.epoch}, {"t", d.t}, {"reason", d.reason}};
    }
    io::write_text(cfg.output_dir / "report.json", report.dump(2) + "\n");

    if (rep.divergence) return kExitDiverged;
    return rep.converged ? kExitConverged : kExitNotConverged;
}

/// Recomputes per-pass metrics from the files of a previous run and writes
/// metrics.json into output_dir.
inline int cmd_eval(const RunConfig& cfg) {
    const auto truth_path = cfg.data_dir / "truth.csv";
    if (!std::filesystem::exists(truth_path)) throw IoError("missing ground truth " + truth_path.string());
    const auto truth = io::read_truth_csv(truth_path);
    if (truth.empty()) throw IoError("ground truth " + truth_path.string() + " has no rows");

    const auto report_path = cfg.output_dir / "report.json";
    if (!std::filesystem::exists(report_path)) throw IoError("missing run report " + report_path.string());
    nlohmann::json report;
    try {
        report = nlohmann::json::parse(io::detail::read_file(report_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(report_path.string() + ": " + e.what());
    }
    if (!report.contains("inlier_counts") || !report["inlier_counts"].is_array())
        throw IoError(report_path.string() + ": missing inlier_counts");
    const std::size_t n_passes = report["inlier_counts"].size();

    std::optional<std::vector<Label>> true_labels;
    if (std::filesystem::exists(cfg.data_dir / "labels_true.csv"))
        true_labels = detail::labels_only(io::read_true_labels_csv(cfg.data_dir / "labels_true.csv"));

    Metrics m;
    for (std::size_t i = 1; i <= n_passes; ++i) {
        const auto traj_path = detail::pass_file(cfg.output_dir, "trajectory", i);
        if (!std::filesystem::exists(traj_path)) throw IoError("missing " + traj_path.string());
        const auto err = trajectory_errors(io::read_trajectory_csv(traj_path), truth);
        m.pos_rmse.push_back(err.pos_rmse);
        m.euler_rmse.push_back(err.euler_rmse);
        if (true_labels) {
            const auto labels_path = detail::pass_file(cfg.output_dir, "labels", i);
            if (!std::filesystem::exists(labels_path)) throw IoError("missing " + labels_path.string());
            std::vector<Label> predicted;
            for (const auto& row : io::read_labels_csv(labels_path)) predicted.push_back(row.label);
            const Confusion c = confusion(predicted, *true_labels);
            m.precision.push_back(c.precision());
            m.recall.push_back(c.recall());
        }
    }
    io::write_text(cfg.output_dir / "metrics.json", detail::metrics_json(m).dump(2) + "\n");
    return kExitConverged;
}

}  // namespace itersmooth::cli
