#include <cstdlib>
#include <filesystem>
#include <random>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "ydlc/bytes.hpp"
#include "ydlc/cli.hpp"
#include "ydlc/color.hpp"
#include "ydlc/evaluation.hpp"
#include "ydlc/model.hpp"

using namespace ydlc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ydlc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // A few frames of noise-free gradients, written as raw YUV.
  std::string sequence(int frames, int w, int h) {
    const std::string p = path("seq.yuv");
    std::mt19937_64 rng(9);
    for (int k = 0; k < frames; ++k) {
      Yuv420Frame f(w, h);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) f.y[i * w + j] = static_cast<std::uint8_t>((4 * i + 3 * j + k) % 256);
      for (auto& b : f.u) b = static_cast<std::uint8_t>(100 + rng() % 20);
      for (auto& b : f.v) b = static_cast<std::uint8_t>(140 + rng() % 20);
      write_yuv420(f, p, k > 0);
    }
    return p;
  }

  std::string checkpoint(const std::string& name, std::uint64_t seed) {
    const std::string p = path(name);
    ModelWeights::initialize(build_architecture(ArchitectureId::proposed_prelu, 8, 12), seed).save(p);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST(CliParse, ExitCodes) {
  EXPECT_EQ(exit_code(ErrorKind::usage), 1);
  EXPECT_EQ(exit_code(ErrorKind::data), 2);
  EXPECT_EQ(exit_code(ErrorKind::invariant), 3);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"params", "--n", "-3"}).code, kExitUsage);
  EXPECT_EQ(cli({"params", "--arch", "nonsense"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(CliParse, ParamsReportsTheSixChannelTotal) {
  const CliRun r = cli({"params", "--arch", "six-channel", "--n", "192", "--m", "320", "--quiet"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("codec six-channel total (\\d+)"))) << r.out;
  const double total = std::stod(m[1]);
  EXPECT_NEAR(total, 7014690.0, 0.01 * 7014690.0);

  const CliRun all = cli({"params", "--all", "--quiet"});
  EXPECT_EQ(all.code, kExitOk);
  EXPECT_NE(all.out.find("codec separate total"), std::string::npos);
  EXPECT_NE(all.out.find("codec proposed-prelu total"), std::string::npos);
}

TEST(CliParse, CheckpointDirectoryResolution) {
  ::setenv("YDLC_CHECKPOINT_DIR", "/ckpt", 1);
  EXPECT_EQ(resolve_checkpoint("a/b.ckpt"), "/ckpt/a/b.ckpt");
  EXPECT_EQ(resolve_checkpoint("/abs.ckpt"), "/abs.ckpt");
  ::unsetenv("YDLC_CHECKPOINT_DIR");
  EXPECT_EQ(resolve_checkpoint("a/b.ckpt"), "a/b.ckpt");
}

TEST_F(CliTest, EncodeDecodeRoundTrip) {
  const std::string seq = sequence(3, 48, 32), ckpt = checkpoint("m.ckpt", 4);
  const CliRun enc = cli({"encode", "-i", seq, "-o", path("f.ydlb"), "--width", "48", "--height", "32",
                       "--ckpt", ckpt, "--frame", "1", "--beta", "0.01", "--recon", path("rec.yuv")});
  ASSERT_EQ(enc.code, kExitOk) << enc.err;
  const CliRun dec = cli({"decode", "-i", path("f.ydlb"), "-o", path("dec.yuv"), "--ckpt", ckpt});
  ASSERT_EQ(dec.code, kExitOk) << dec.err;
  EXPECT_EQ(read_file(path("dec.yuv")), read_file(path("rec.yuv")));

  // Strided sequence encoding writes one bitstream per sampled frame.
  const CliRun dir = cli({"encode", "-i", seq, "-o", path("bits"), "--width", "48", "--height", "32",
                       "--ckpt", ckpt, "--stride", "2"});
  ASSERT_EQ(dir.code, kExitOk) << dir.err;
  EXPECT_TRUE(fs::exists(path("bits/frame_00000.ydlb")));
  EXPECT_TRUE(fs::exists(path("bits/frame_00002.ydlb")));
  EXPECT_FALSE(fs::exists(path("bits/frame_00001.ydlb")));
}

TEST_F(CliTest, DataAndUsageFailures) {
  const std::string seq = sequence(1, 48, 32), ckpt = checkpoint("m.ckpt", 4);
  EXPECT_EQ(cli({"decode", "-i", seq, "-o", path("x.yuv"), "--ckpt", ckpt}).code, kExitData);
  EXPECT_EQ(cli({"decode", "-i", path("missing.ydlb"), "-o", path("x.yuv"), "--ckpt", ckpt}).code,
            kExitData);
  const CliRun r = cli({"encode", "-i", seq, "-o", path("f.ydlb"), "--width", "0", "--height", "32",
                     "--ckpt", ckpt});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  EXPECT_EQ(cli({"convert", "-i", seq, "-o", path("y.yuv")}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--set", "steps = 1"}).code, kExitUsage);
}

TEST_F(CliTest, ConvertPpmAndFrames) {
  const std::string seq = sequence(4, 16, 8);
  ASSERT_EQ(cli({"convert", "-i", seq, "-o", path("f.ppm"), "--width", "16", "--height", "8",
                 "--frame", "2"}).code,
            kExitOk);
  ASSERT_EQ(cli({"convert", "-i", path("f.ppm"), "-o", path("back.yuv")}).code, kExitOk);
  EXPECT_EQ(fs::file_size(path("back.yuv")), Yuv420Frame::frame_bytes(16, 8));
  ASSERT_EQ(cli({"convert", "-i", seq, "-o", path("every2.yuv"), "--width", "16", "--height", "8",
                 "--stride", "2"}).code,
            kExitOk);
  EXPECT_EQ(read_yuv420(path("every2.yuv"), 16, 8, 1), read_yuv420(seq, 16, 8, 2));
}

TEST_F(CliTest, TrainWritesACheckpoint) {
  const CliRun r = cli({"train", "--quiet", "--set", "arch = proposed-prelu", "--set", "n = 8",
                     "--set", "m = 12", "--set", "steps = 3", "--set", "batch = 2", "--set",
                     "patch = 32", "--set", "synthetic_frames = 2", "--set", "synthetic_size = 64",
                     "--set", "checkpoint = " + path("t.ckpt")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ModelWeights::load(path("t.ckpt")).arch(), ArchitectureId::proposed_prelu);
}

TEST_F(CliTest, BdrateSelfComparisonIsZero) {
  RdCurve c{"anchor", {}};
  for (int i = 0; i < 4; ++i) {
    RdPoint p;
    p.label = std::to_string(i);
    p.rate_bpp = 0.1 * (1 << i);
    p.rate_kbps = p.rate_bpp * 10;
    p.psnr_y = 30 + 2.5 * i;
    p.psnr_u = p.psnr_y + 4;
    p.psnr_v = p.psnr_y + 5;
    c.points.push_back(p);
  }
  const std::vector<RdCurve> curves = {c};
  const std::string csv = curves_csv(curves);
  write_file(path("a.csv"), {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
  const CliRun r = cli({"bdrate", "--anchor", path("a.csv"), "--test", path("a.csv"), "-o",
                     path("bd.csv"), "--svg", path("rd.svg")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(path("rd.svg")));
  // Every numeric BD column of the data rows is zero.
  std::istringstream lines(r.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line.front() == '#' || line.starts_with("codec,")) continue;
    ++rows;
    std::istringstream fields(line);
    std::string f;
    std::vector<std::string> parts;
    while (std::getline(fields, f, ',')) parts.push_back(f);
    ASSERT_GE(parts.size(), 4u) << line;
    for (std::size_t i = parts.size() - 4; i < parts.size(); ++i) {
      EXPECT_NEAR(std::stod(parts[i]), 0.0, 1e-6) << line;
    }
  }
  EXPECT_EQ(rows, 1);
}

TEST_F(CliTest, EvalSweepsCheckpoints) {
  const std::string seq = sequence(16, 32, 32);
  const CliRun r = cli({"eval", "-i", seq, "--width", "32", "--height", "32", "--model",
                     "0.005=" + checkpoint("a.ckpt", 1), "--model", "0.2=" + checkpoint("b.ckpt", 2),
                     "--out", path("rep"), "-j", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto text = read_file(path("rep_rd.csv"));
  const auto parsed = parse_curves_csv(std::string(text.begin(), text.end()));
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed[0].points.size(), 2u);
  EXPECT_EQ(cli({"eval", "-i", seq, "--width", "32", "--height", "32", "--model", "bad"}).code,
            kExitUsage);
}

TEST(CliSelftest, AllChecksPass) {
  const CliRun r = cli({"selftest"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
}
