#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("tarnn_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string& name) const { return (dir / name).string(); }

  static std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  Result run(const std::string& args) const {
    const std::string cmd = std::string(TARNN_CLI) + " " + args + " >" + p("stdout.txt") + " 2>" + p("stderr.txt");
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(p("stdout.txt"));
    r.err = slurp(p("stderr.txt"));
    return r;
  }

  // CSTR-shaped raw file.
  void write_raw(const std::string& name, std::size_t rows) const {
    std::ofstream os(p(name));
    os << "% t u y1 y2\n";
    double a = 0, b = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double t = 0.1 * static_cast<double>(i);
      const double u = std::sin(0.7 * t) + 0.5 * std::sin(0.13 * t);
      a = 0.95 * a + 0.05 * u;
      b = 0.9 * b + 0.1 * a * a;
      os << t << ' ' << u << ' ' << a << ' ' << b << '\n';
    }
  }

  void write_winding_raw(const std::string& name, std::size_t rows) const {
    std::ofstream os(p(name));
    double a = 0, b = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double t = 0.1 * static_cast<double>(i);
      double u[5];
      for (int c = 0; c < 5; ++c) u[c] = std::sin(0.3 * (c + 1) * t + c);
      a = 0.9 * a + 0.1 * (u[0] - u[2]);
      b = 0.8 * b + 0.2 * u[1] * u[3];
      for (double v : u) os << v << ' ';
      os << a << ' ' << b << '\n';
    }
  }

  void write_config(const std::string& name, const std::string& dataset, const std::string& extra) const {
    std::ofstream os(p(name));
    os << "dataset = " << dataset << "\nk = 4\nbatch_size = 32\nL = 5\nmax_epochs = 3\n" << extra;
  }

  static std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }
};

}  // namespace

TEST_F(Cli, PrepareCstrPresetKeepsAllRows) {
  write_raw("cstr.dat", 7500);
  const auto r = run("prepare " + p("cstr.dat") + " --preset cstr -o " + p("cstr.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(slurp(p("cstr.csv"))), 7501u);
  EXPECT_NE(r.out.find("rows retained:   7500"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mu_delta"), std::string::npos);
  EXPECT_EQ(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, PrepareSubsamplingDeterministic) {
  write_raw("cstr.dat", 1000);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr --p-missing 0.5 --seed 4 -o " + p("a.csv")).code, 0);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr --p-missing 0.5 --seed 4 -o " + p("b.csv")).code, 0);
  EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
  EXPECT_LT(line_count(slurp(p("a.csv"))), 700u);
}

TEST_F(Cli, PrepareRejectsBadInput) {
  write_raw("cstr.dat", 100);
  auto r = run("prepare " + p("cstr.dat") + " --preset cstr --p-missing 1.0 -o " + p("x.csv"));
  EXPECT_EQ(r.code, 1);
  r = run("prepare " + p("nope.dat") + " --preset cstr -o " + p("x.csv"));
  EXPECT_EQ(r.code, 2);
  r = run("prepare " + p("cstr.dat") + " --preset cstr -o " + p("x.csv"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);  // 100 rows, preset expects 7500
  {
    std::ofstream os(p("bad.dat"));
    os << "0 1 2 3\n0.1 1 two 3\n";
  }
  r = run("prepare " + p("bad.dat") + " --preset cstr -o " + p("x.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(":2:"), std::string::npos) << r.err;
}

TEST_F(Cli, PrepareCustomColumns) {
  {
    std::ofstream os(p("c.dat"));
    for (int i = 0; i < 30; ++i) os << i * 0.5 << ' ' << i % 3 << ' ' << i * i % 5 << '\n';
  }
  const auto r = run("prepare " + p("c.dat") + " --inputs 1 --outputs 2 --period 2 -o " + p("c.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(p("c.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x1,y1");
  EXPECT_NE(csv.find("\n2,"), std::string::npos);
}

TEST_F(Cli, TrainEvaluateRoundTrip) {
  write_raw("cstr.dat", 600);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr --p-missing 0.5 -o " + p("cstr.csv")).code, 0);
  write_config("run.cfg", p("cstr.csv"), "scheme = rk4\ninterpolation = linear\n");
  auto r = run("train " + p("run.cfg") + " -q -o " + p("m.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(p("m.txt")));
  const auto hist = nlohmann::json::parse(slurp(p("m.txt.history.json")));
  EXPECT_EQ(hist["epochs"].size(), 3u);

  double split_rrse[2];
  int i = 0;
  for (const char* split : {"train", "test"}) {
    r = run("evaluate " + p("m.txt") + " " + p("cstr.csv") + " --split " + split);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    split_rrse[i] = j["mean_rrse_percent"].get<double>();
    EXPECT_TRUE(std::isfinite(split_rrse[i++]));
    EXPECT_EQ(j["split"], split);
    EXPECT_EQ(j["epochs"], 3);
    EXPECT_EQ(j["seed"], 0);
    EXPECT_EQ(j["config_digest"].get<std::string>().size(), 16u);
  }

  r = run("evaluate " + p("m.txt") + " " + p("cstr.csv") + " --dump " + p("pred.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string dump = slurp(p("pred.csv"));
  EXPECT_EQ(dump.substr(0, dump.find('\n')), "t,y_true_1,y_true_2,y_pred_1,y_pred_2");

  // deterministic: same config, same model file
  ASSERT_EQ(run("train " + p("run.cfg") + " -q -o " + p("m2.txt")).code, 0);
  EXPECT_EQ(slurp(p("m.txt")), slurp(p("m2.txt")));
  EXPECT_EQ(slurp(p("m.txt.history.json")), slurp(p("m2.txt.history.json")));
}

TEST_F(Cli, EvaluateRejectsOtherData) {
  write_raw("cstr.dat", 400);
  write_raw("other.dat", 450);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr -o " + p("a.csv")).code, 0);
  ASSERT_EQ(run("prepare " + p("other.dat") + " --preset cstr -o " + p("b.csv")).code, 0);
  write_winding_raw("w.dat", 300);
  ASSERT_EQ(run("prepare " + p("w.dat") + " --preset winding -o " + p("w.csv")).code, 0);
  write_config("run.cfg", p("a.csv"), "");
  ASSERT_EQ(run("train " + p("run.cfg") + " --set max_epochs=1 -q -o " + p("m.txt")).code, 0);
  auto r = run("evaluate " + p("m.txt") + " " + p("b.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("digest"), std::string::npos) << r.err;
  r = run("evaluate " + p("m.txt") + " " + p("w.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("channels"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainTablePresetsComplete) {
  write_raw("cstr.dat", 500);
  write_winding_raw("w.dat", 400);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr -o " + p("c.csv")).code, 0);
  ASSERT_EQ(run("prepare " + p("w.dat") + " --preset winding -o " + p("w.csv")).code, 0);
  {
    std::ofstream os(p("cstr_gru.cfg"));
    os << "dataset = " << p("c.csv") << "\ncell = gru\nbatch_size = 512\nk = 20\nlr = 0.001\nmax_epochs = 2\n";
  }
  {
    std::ofstream os(p("wind_asrnn.cfg"));
    os << "dataset = " << p("w.csv") << "\ncell = asrnn\nbatch_size = 64\nk = 10\nlr = 0.01\nmax_epochs = 2\n";
  }
  auto r = run("train " + p("cstr_gru.cfg") + " -q -o " + p("a.txt"));
  EXPECT_EQ(r.code, 0) << r.err;
  r = run("train " + p("wind_asrnn.cfg") + " -q -o " + p("b.txt"));
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, TrainFailuresWriteNoModel) {
  write_config("missing.cfg", p("absent.csv"), "");
  auto r = run("train " + p("missing.cfg") + " -o " + p("m.txt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent.csv"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(p("m.txt")));

  write_config("bad.cfg", p("absent.csv"), "learning_rate = 3\nhidden = 4\n");
  r = run("train " + p("bad.cfg") + " -o " + p("m.txt"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
  EXPECT_NE(r.err.find("hidden"), std::string::npos);

  write_raw("cstr.dat", 300);
  ASSERT_EQ(run("prepare " + p("cstr.dat") + " --preset cstr -o " + p("c.csv")).code, 0);
  write_config("boom.cfg", p("c.csv"), "lr = 1e300\n");
  r = run("train " + p("boom.cfg") + " -q -o " + p("m.txt"));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_FALSE(fs::exists(p("m.txt")));
}

TEST_F(Cli, BenchmarkArgumentErrors) {
  auto r = run("benchmark table9 --data-dir " + dir.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("table4-winding"), std::string::npos) << r.err;
  r = run("benchmark table3-cstr --data-dir " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cstr.dat"), std::string::npos) << r.err;
}

TEST_F(Cli, BenchmarkSmokeRun) {
  write_raw("cstr.dat", 300);
  const auto r = run("benchmark table4-cstr --data-dir " + dir.string() + " --max-epochs 1 -j 2 -o " + p("b.csv"));
  EXPECT_TRUE(r.code == 0 || r.code == 4) << r.err;
  const std::string csv = slurp(p("b.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "config,cell,scheme,formulation,interp,mean_rrse,std_rrse,failures,pass");
  EXPECT_EQ(line_count(csv), 5u);
}

TEST_F(Cli, SelfChecks) {
  EXPECT_EQ(run("ordercheck").code, 0);
  const auto r = run("gradcheck --draws 3");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}
