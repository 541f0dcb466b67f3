#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "xflat/cli.hpp"

using namespace xflat;
using namespace xflat::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "xflat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmall = {"--grid.n_theta=8", "--grid.n_phi=2",       "--grid.n_energy=3",
                                         "--devices.cpu.count=1", "--devices.phi.count=1", "--devices.phi.threads=1",
                                         "--devices.cpu.threads=1"};

std::vector<std::string> with_small(std::vector<std::string> v) {
  v.insert(v.end(), kSmall.begin(), kSmall.end());
  return v;
}

}  // namespace

TEST(Cli, PartitionFortyRanks) {
  const Result r = run({"partition", "--ranks", "40"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("250"), std::string::npos);
  EXPECT_EQ(r.out.find("249"), std::string::npos);
}

TEST(Cli, PartitionHonorsDottedOverrides) {
  const Result r = run({"partition", "--grid.n_theta=100", "--devices.phi.count=0", "--devices.cpu.count=4"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total 100 theta bins over 4 ranks"), std::string::npos) << r.out;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"partition", "--bogus"}).code, 2);
  EXPECT_EQ(run({"partition", "--grid.n_theta"}).code, 2);
}

TEST(Cli, ConfigErrorsExitThree) {
  const Result r = run({"partition", "--grid.n_thetaa=5"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("grid.n_thetaa"), std::string::npos);
  EXPECT_EQ(run({"run", "--config", "/nonexistent.ini"}).code, 3);
  auto staged = with_small({"run", "--io.mode=staged"});
  staged.push_back("--devices.cpu.count=0");
  EXPECT_EQ(run(staged).code, 3);
}

TEST(Cli, RunWritesSnapshotsAndManifest) {
  const fs::path dir = temp_dir("cli_run");
  const Result r = run(with_small({"run", "--out", dir.string(), "--run.steps=20", "--io.mode=direct", "--run.log_interval=10"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("step=10 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("snapshots=20"), std::string::npos) << r.out;
  std::size_t snaps = 0;
  for (const auto& e : fs::directory_iterator(dir)) snaps += e.path().filename() != "manifest.txt";
  EXPECT_EQ(snaps, 20u);
  const std::string manifest = [&] {
    std::ifstream in(dir / "manifest.txt");
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  EXPECT_NE(manifest.find("config_hash = "), std::string::npos);
  EXPECT_NE(manifest.find("grid.n_theta = 8"), std::string::npos);
}

TEST(Cli, InspectGoodAndTruncatedSnapshots) {
  const fs::path dir = temp_dir("cli_inspect");
  ASSERT_EQ(run(with_small({"run", "--out", dir.string(), "--run.steps=10", "--io.mode=direct", "--io.interval=10"})).code, 0);
  fs::path snap;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "manifest.txt") snap = e.path();
  const Result good = run({"inspect", snap.string()});
  EXPECT_EQ(good.code, 0) << good.err;
  EXPECT_NE(good.out.find("step"), std::string::npos);

  fs::resize_file(snap, fs::file_size(snap) - 10);
  const Result bad = run({"inspect", snap.string()});
  EXPECT_EQ(bad.code, 4);
  EXPECT_NE(bad.err.find("trunc"), std::string::npos) << bad.err;
}

TEST(Cli, BenchFlopsCsv) {
  const fs::path dir = temp_dir("cli_bench");
  const Result r = run({"bench", "flops", "--width", "8", "--iterations", "1000", "--csv", (dir / "f.csv").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "f.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kCsvHeader);
}

TEST(Cli, Validate) {
  const Result r = run({"validate"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, OverrideParsing) {
  const auto o = parse_overrides({"--grid.n_theta=8", "--step.h", "0.1", "--seed=3"});
  ASSERT_EQ(o.size(), 3u);
  EXPECT_EQ(o[1], (std::pair<std::string, std::string>{"step.h", "0.1"}));
  EXPECT_THROW(parse_overrides({"--verbose"}), UsageError);
  EXPECT_THROW(parse_overrides({"stray"}), UsageError);
}
