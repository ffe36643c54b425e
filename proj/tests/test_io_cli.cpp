#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "itersmooth/cli.hpp"
#include "itersmooth/errors.hpp"
#include "itersmooth/io.hpp"
#include "scenarios.hpp"

using namespace itersmooth;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory named after the running test, removed afterwards.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / ("itersmooth_" + std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t parse_error_line(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.line();
    }
    ADD_FAILURE() << "expected ParseError";
    return 0;
}

/// Small benchmark-style config rooted in a scratch directory.
cli::RunConfig small_config(const TempDir& dir, double duration = 8.0) {
    cli::RunConfig cfg = scenario::load("benchmark.json");
    cfg.scenario.duration = duration;
    cfg.data_dir = dir / "data";
    cfg.output_dir = dir / "out";
    return cfg;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST(Csv, ReadsImuRows) {
    TempDir dir;
    write(dir / "imu.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.80665,0,0,0\n0.004,1,2,3,4,5,6\n0.008,0,0,-9.8,0.1,0,0\n");
    const auto imu = io::read_imu_csv(dir / "imu.csv");
    ASSERT_EQ(imu.size(), 3u);
    EXPECT_EQ(imu[1].t, 0.004);
    EXPECT_EQ(imu[1].f_b, Vec3(1, 2, 3));
    EXPECT_EQ(imu[1].w_b, Vec3(4, 5, 6));
    EXPECT_EQ(imu[0].f_b.z(), -9.80665);
}

TEST(Csv, ShortRowReportsItsLine) {
    TempDir dir;
    write(dir / "imu.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n0.004,0,0,-9.8,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_imu_csv(dir / "imu.csv"); }), 3u);
}

TEST(Csv, NonNumericFieldReportsItsLine) {
    TempDir dir;
    write(dir / "imu.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n\n0.004,0,abc,-9.8,0,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_imu_csv(dir / "imu.csv"); }), 4u);
    write(dir / "imu.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,0,nan,0,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_imu_csv(dir / "imu.csv"); }), 2u);
}

TEST(Csv, DuplicateTimestampRejected) {
    TempDir dir;
    write(dir / "imu.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n0.004,0,0,-9.8,0,0,0\n0.004,0,0,-9.8,0,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_imu_csv(dir / "imu.csv"); }), 4u);
    write(dir / "meas.csv", "t,x,y,z,roll,pitch,yaw,marker_id\n1,0,0,0,0,0,0,0\n0.5,0,0,0,0,0,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_meas_csv(dir / "meas.csv"); }), 3u);
}

TEST(Csv, WrongHeaderRejected) {
    TempDir dir;
    write(dir / "imu.csv", "time,fx,fy,fz,wx,wy,wz\n0,0,0,-9.8,0,0,0\n");
    EXPECT_EQ(parse_error_line([&] { io::read_imu_csv(dir / "imu.csv"); }), 1u);
}

TEST(Csv, MeasurementYawIsWrapped) {
    TempDir dir;
    write(dir / "meas.csv", "t,x,y,z,roll,pitch,yaw,marker_id\n0.1,1,2,3,0.1,0.2,7.0,4\n");
    const auto meas = io::read_meas_csv(dir / "meas.csv");
    ASSERT_EQ(meas.size(), 1u);
    EXPECT_NEAR(meas[0].euler.yaw, 7.0 - 2.0 * kPi, 1e-15);
    EXPECT_EQ(meas[0].marker_id, 4);
    EXPECT_EQ(meas[0].position, Vec3(1, 2, 3));
}

TEST(Csv, EmptyMeasurementFileIsAllowed) {
    TempDir dir;
    write(dir / "meas.csv", "");
    EXPECT_TRUE(io::read_meas_csv(dir / "meas.csv").empty());
    write(dir / "meas.csv", "t,x,y,z,roll,pitch,yaw,marker_id\n");
    EXPECT_TRUE(io::read_meas_csv(dir / "meas.csv").empty());
}

TEST(Csv, MissingFileIsIoError) {
    TempDir dir;
    EXPECT_THROW(io::read_imu_csv(dir / "absent.csv"), IoError);
}

TEST(Csv, AtomicWriteLeavesNoTemporary) {
    TempDir dir;
    io::write_text(dir / "a.txt", "hello\n");
    EXPECT_EQ(slurp(dir / "a.txt"), "hello\n");
    EXPECT_FALSE(fs::exists(dir / "a.txt.tmp"));
    EXPECT_THROW(io::write_text(dir / "no_such_dir" / "a.txt", "x"), IoError);
}

TEST(Generate, FilesRoundTripExactly) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir);
    ASSERT_EQ(cli::cmd_generate(cfg), cli::kExitConverged);
    const LabeledDataset lds = generate_dataset(cfg.scenario, cfg.smoother.model);

    const auto imu = io::read_imu_csv(cfg.data_dir / "imu.csv");
    ASSERT_EQ(imu.size(), lds.data.imu.size());
    for (std::size_t k = 0; k < imu.size(); ++k) {
        EXPECT_EQ(imu[k].t, lds.data.imu[k].t);
        EXPECT_EQ(imu[k].f_b, lds.data.imu[k].f_b);
        EXPECT_EQ(imu[k].w_b, lds.data.imu[k].w_b);
    }
    const auto meas = io::read_meas_csv(cfg.data_dir / "meas.csv");
    ASSERT_EQ(meas.size(), lds.data.meas.size());
    for (std::size_t j = 0; j < meas.size(); ++j) {
        EXPECT_EQ(meas[j].t, lds.data.meas[j].t);
        EXPECT_EQ(meas[j].position, lds.data.meas[j].position);
        EXPECT_EQ(meas[j].euler, lds.data.meas[j].euler);
        EXPECT_EQ(meas[j].marker_id, lds.data.meas[j].marker_id);
    }
    const auto truth = io::read_truth_csv(cfg.data_dir / "truth.csv");
    ASSERT_EQ(truth.size(), lds.data.ground_truth->size());
    for (std::size_t k = 0; k < truth.size(); ++k) EXPECT_EQ(truth[k].x, (*lds.data.ground_truth)[k].x);
    const auto labels = io::read_true_labels_csv(cfg.data_dir / "labels_true.csv");
    ASSERT_EQ(labels.size(), meas.size());
    for (std::size_t j = 0; j < labels.size(); ++j) {
        EXPECT_EQ(labels[j].index, j);
        EXPECT_EQ(labels[j].label, (*lds.data.true_labels)[j]);
        EXPECT_EQ(labels[j].offset, lds.planted_offsets[j]);
    }
}

TEST(Generate, HeadersAndRowCounts) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir, 10.0);
    cli::cmd_generate(cfg);
    auto first_line = [](const fs::path& p) {
        std::ifstream in(p);
        std::string line;
        std::getline(in, line);
        return line;
    };
    auto rows = [](const fs::path& p) {
        std::ifstream in(p);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) n += !line.empty();
        return n - 1;
    };
    EXPECT_EQ(first_line(cfg.data_dir / "imu.csv"), io::kImuHeader);
    EXPECT_EQ(first_line(cfg.data_dir / "meas.csv"), io::kMeasHeader);
    EXPECT_EQ(first_line(cfg.data_dir / "truth.csv"), io::kTruthHeader);
    EXPECT_EQ(first_line(cfg.data_dir / "labels_true.csv"), io::kTrueLabelsHeader);
    EXPECT_NEAR(static_cast<double>(rows(cfg.data_dir / "imu.csv")), 10.0 * 252.0, 1.0);
    EXPECT_NEAR(static_cast<double>(rows(cfg.data_dir / "meas.csv")), 10.0 * 26.0, 1.0);
}

TEST(Generate, ByteIdenticalPerSeed) {
    TempDir dir;
    cli::RunConfig a = small_config(dir);
    cli::RunConfig b = a;
    b.data_dir = dir / "data_b";
    cli::RunConfig c = a;
    c.data_dir = dir / "data_c";
    c.scenario.rng_seed = a.scenario.rng_seed + 1;
    cli::cmd_generate(a);
    cli::cmd_generate(b);
    cli::cmd_generate(c);
    for (const char* f : {"imu.csv", "meas.csv", "truth.csv", "labels_true.csv"})
        EXPECT_EQ(slurp(a.data_dir / f), slurp(b.data_dir / f)) << f;
    EXPECT_NE(slurp(a.data_dir / "meas.csv"), slurp(c.data_dir / "meas.csv"));
}

TEST(Config, BundledConfigsLoad) {
    for (const char* name : {"benchmark.json", "clean.json", "stress.json"}) {
        SCOPED_TRACE(name);
        const cli::RunConfig cfg = scenario::load(name);
        EXPECT_EQ(cfg.smoother.lag, 26);
        EXPECT_EQ(cfg.smoother.gate.threshold, chi2_threshold(6, cfg.smoother.gate.p));
    }
}

TEST(Config, RejectsUnknownAndMalformedKeys) {
    EXPECT_THROW(cli::config_from_json({{"lag", 3}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"lag_steps", "3"}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"lag_steps", 2.5}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"lag_steps", -1}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"lag_steps", cli::kMaxLag + 1}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"chi2_p", 0.0}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"sigma_pos_m", {0.1, 0.1}}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"sigma_pos_m", {0.1, 0.0, 0.1}}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json({{"outlier_rate", 1.0}}), InvalidArgument);
    EXPECT_THROW(cli::config_from_json(nlohmann::json::array()), InvalidArgument);
}

TEST(Config, MalformedFileIsRejected) {
    TempDir dir;
    write(dir / "bad.json", "{ \"lag_steps\": 3, ");
    EXPECT_THROW(cli::load_config(dir / "bad.json"), InvalidArgument);
    EXPECT_THROW(cli::load_config(dir / "absent.json"), IoError);
}

TEST(Config, DefaultsAndCertainGate) {
    cli::RunConfig cfg = cli::config_from_json(nlohmann::json::object());
    EXPECT_EQ(cfg.smoother.lag, 26);
    EXPECT_EQ(cfg.smoother.gate.p, 0.95);
    cfg = cli::config_from_json({{"chi2_p", 1.0}});
    EXPECT_TRUE(std::isinf(cfg.smoother.gate.threshold));
}

TEST(Config, OverridesApplyAndValidate) {
    cli::RunConfig cfg = scenario::load("benchmark.json");
    cli::Overrides o;
    o.seed = 42;
    o.lag = 3;
    o.chi2_p = 0.99;
    o.max_iterations = 7;
    o.data_dir = "d";
    o.output_dir = "o";
    cli::apply_overrides(cfg, o);
    EXPECT_EQ(cfg.scenario.rng_seed, 42u);
    EXPECT_EQ(cfg.smoother.lag, 3);
    EXPECT_EQ(cfg.smoother.max_iterations, 7);
    EXPECT_EQ(cfg.smoother.gate.threshold, chi2_threshold(6, 0.99));
    EXPECT_EQ(cfg.data_dir, fs::path("d"));
    EXPECT_EQ(cfg.output_dir, fs::path("o"));

    cli::Overrides bad;
    bad.max_iterations = 0;
    EXPECT_THROW(cli::apply_overrides(cfg, bad), InvalidArgument);
}

TEST(Run, WritesConsistentReportAndPassFiles) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir, 20.0);
    cli::cmd_generate(cfg);
    const int code = cli::cmd_run(cfg);
    const auto report = read_json(cfg.output_dir / "report.json");
    EXPECT_EQ(code, report["converged"].get<bool>() ? cli::kExitConverged : cli::kExitNotConverged);
    EXPECT_TRUE(report["divergence"].is_null());
    const auto& counts = report["inlier_counts"];
    ASSERT_EQ(counts.size(), report["iterations_used"].get<std::size_t>());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto rows = io::read_labels_csv(cfg.output_dir / ("labels_" + std::to_string(i + 1) + ".csv"));
        std::size_t inliers = 0;
        for (const auto& r : rows) inliers += r.label == Label::Inlier;
        EXPECT_EQ(inliers, counts[i].get<std::size_t>());
        const auto traj = io::read_trajectory_csv(cfg.output_dir / ("trajectory_" + std::to_string(i + 1) + ".csv"));
        EXPECT_EQ(traj.size(), io::read_imu_csv(cfg.data_dir / "imu.csv").size());
    }
    const auto& m = report["metrics"];
    ASSERT_TRUE(m.is_object());
    for (const char* key : {"pos_rmse", "euler_rmse", "precision", "recall"}) {
        ASSERT_EQ(m[key].size(), counts.size()) << key;
        for (const auto& v : m[key]) EXPECT_TRUE(std::isfinite(v.get<double>()));
    }
}

TEST(Run, SinglePassBudgetExitsNotConverged) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir);
    cfg.smoother.max_iterations = 1;
    cli::cmd_generate(cfg);
    EXPECT_EQ(cli::cmd_run(cfg), cli::kExitNotConverged);
    const auto report = read_json(cfg.output_dir / "report.json");
    EXPECT_FALSE(report["converged"].get<bool>());
    EXPECT_EQ(report["iterations_used"].get<int>(), 1);
}

TEST(Run, StressExitsDivergedWithDiagnostic) {
    TempDir dir;
    cli::RunConfig cfg = scenario::load("stress.json");
    cfg.scenario.duration = 20.0;
    cfg.data_dir = dir / "data";
    cfg.output_dir = dir / "out";
    cli::cmd_generate(cfg);
    EXPECT_EQ(cli::cmd_run(cfg), cli::kExitDiverged);
    const auto report = read_json(cfg.output_dir / "report.json");
    ASSERT_TRUE(report["divergence"].is_object());
    EXPECT_FALSE(report["divergence"]["reason"].get<std::string>().empty());
    EXPECT_FALSE(report["converged"].get<bool>());
}

TEST(Run, LagZeroTrajectoryMatchesReferenceFilter) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir, 4.0);
    cfg.smoother.lag = 0;
    cfg.smoother.max_iterations = 1;
    cli::cmd_generate(cfg);
    cli::cmd_run(cfg);
    const Dataset ds = cli::load_dataset(cfg.data_dir);
    const auto traj = io::read_trajectory_csv(cfg.output_dir / "trajectory_1.csv");
    ASSERT_EQ(traj.size(), ds.imu.size());

    oracle::ReferenceEkf ekf{initial_state(ds), cfg.smoother.p0(), cfg.smoother.noise, cfg.smoother.model};
    const auto by_epoch = detail::assign_to_epochs(ds);
    double worst = 0.0;
    for (std::size_t k = 0; k < ds.imu.size(); ++k) {
        if (k > 0) ekf.propagate(ds.imu[k], ds.imu[k].t - ds.imu[k - 1].t);
        for (std::size_t j : by_epoch[k]) ekf.update(ds.meas[j]);
        worst = std::max(worst, scenario::state_diff(traj[k].x, ekf.x));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Run, MissingInputIsIoError) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir);
    EXPECT_THROW(cli::cmd_run(cfg), IoError);
}

TEST(Eval, TruthAsTrajectoryScoresZero) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir);
    cli::cmd_generate(cfg);
    fs::create_directories(cfg.output_dir);
    std::vector<TrajectoryPoint> traj;
    for (const auto& s : io::read_truth_csv(cfg.data_dir / "truth.csv")) traj.push_back({s.t, s.x, Vec9::Zero()});
    io::write_trajectory_csv(cfg.output_dir / "trajectory_1.csv", traj);
    std::vector<GatingRecord> records;
    for (const auto& l : io::read_true_labels_csv(cfg.data_dir / "labels_true.csv"))
        records.push_back({l.index, l.t, 0.0, l.label, 1});
    io::write_labels_csv(cfg.output_dir / "labels_1.csv", records);
    io::write_text(cfg.output_dir / "report.json", R"({"inlier_counts": [0]})");

    EXPECT_EQ(cli::cmd_eval(cfg), cli::kExitConverged);
    const auto m = read_json(cfg.output_dir / "metrics.json");
    EXPECT_EQ(m["pos_rmse"][0].get<double>(), 0.0);
    EXPECT_EQ(m["euler_rmse"][0].get<double>(), 0.0);
    EXPECT_EQ(m["precision"][0].get<double>(), 1.0);
    EXPECT_EQ(m["recall"][0].get<double>(), 1.0);
}

TEST(Eval, AgreesWithRunMetrics) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir, 20.0);
    cli::cmd_generate(cfg);
    cli::cmd_run(cfg);
    cli::cmd_eval(cfg);
    const auto run = read_json(cfg.output_dir / "report.json")["metrics"];
    const auto eval = read_json(cfg.output_dir / "metrics.json");
    for (const char* key : {"pos_rmse", "euler_rmse", "precision", "recall"}) {
        ASSERT_EQ(run[key].size(), eval[key].size());
        for (std::size_t i = 0; i < run[key].size(); ++i)
            EXPECT_NEAR(run[key][i].get<double>(), eval[key][i].get<double>(), 1e-12) << key;
    }
}

TEST(Eval, MissingTruthIsIoError) {
    TempDir dir;
    cli::RunConfig cfg = small_config(dir);
    cli::cmd_generate(cfg);
    cli::cmd_run(cfg);
    fs::remove(cfg.data_dir / "truth.csv");
    EXPECT_THROW(cli::cmd_eval(cfg), IoError);
}
