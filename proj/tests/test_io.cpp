#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "styleswin/run.hpp"
#include "test_util.hpp"

using namespace styleswin;
using namespace styleswin::testing;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("styleswin_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

RunConfig micro_run() {
  RunConfig c;
  c.generator.start_size = 4;
  c.generator.target_size = 8;
  c.generator.scales = {{8, 2, 2}, {4, 4, 2}};
  c.generator.z_dim = 4;
  c.generator.w_dim = 4;
  c.generator.mapping_depth = 2;
  c.generator.mlp_ratio = 2.0;
  c.discriminator.image_size = 8;
  c.discriminator.channels = {4, 6, 8};
  c.train.batch_size = 2;
  c.train.total_iters = 6;
  c.train.r1_interval = 2;
  c.dataset.image_size = 8;
  c.dataset.count = 32;
  c.eval_interval = 2;
  c.eval_samples = 8;
  c.blocking_samples = 4;
  return c;
}

std::vector<std::uint8_t> png_bytes_of(const Tensor& img) {
  std::vector<std::uint8_t> out;
  for (double v : img.data()) out.push_back(to_byte(v));
  return out;
}

}  // namespace

TEST(Config, DefaultRoundTrip) {
  const RunConfig c;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, ModifiedRoundTrip) {
  RunConfig c = micro_run();
  c.train.lr_g = 1.0 / 3.0;
  c.train.tv_enabled = true;
  c.train.seed = 123456789012345ull;
  c.augment.cutout_frac = 0.3;
  c.dataset.kind = DatasetKind::RingGaussians;
  c.generator.attention = BlockAttention::Swin;
  c.discriminator.kind = DiscriminatorKind::Conv;
  c.output_dir = "some/dir";
  const std::string text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, UnknownKeyOrSectionRejected) {
  const std::string text = serialize_config(RunConfig{});
  EXPECT_THROW(parse_config(text + "\n[train]\nlearning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse_config(text + "\n[bogus]\nx = 1\n"), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(parse_config("[train]\nbatch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nlr_g = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("[dataset]\nkind = faces\n"), ConfigError);
  // Dataset and generator resolutions must agree.
  EXPECT_THROW(parse_config("[dataset]\nimage_size = 32\n"), ConfigError);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/styleswin.ini"), IoError);
}

TEST(Png, ByteMappingConvention) {
  EXPECT_EQ(to_byte(-1.0), 0);
  EXPECT_EQ(to_byte(0.0), 128);
  EXPECT_EQ(to_byte(1.0), 255);
  EXPECT_EQ(to_byte(-7.0), 0);
  EXPECT_EQ(to_byte(9.0), 255);
}

TEST(Png, GridRoundTrip) {
  TempDir dir;
  std::vector<double> values(36, 0.0);
  std::fill(values.begin(), values.begin() + 12, -1.0);
  std::fill(values.begin() + 24, values.end(), 1.0);
  const Tensor batch = Tensor::from({3, 2, 2, 3}, values);
  write_sample_grid(batch, dir / "grid.png");
  const Tensor back = read_png(dir / "grid.png");
  ASSERT_EQ(back.shape(), (Shape{4, 4, 3}));
  const auto bytes = png_bytes_of(back);
  EXPECT_EQ(bytes[0], 0);                         // tile 0 black
  EXPECT_EQ(bytes[(0 * 4 + 2) * 3], 128);         // tile 1 mid-gray
  EXPECT_EQ(bytes[(2 * 4 + 0) * 3], 255);         // tile 2 white
  EXPECT_EQ(bytes[(2 * 4 + 2) * 3], 0);           // padding tile
}

TEST(Png, ErrorsCarryPath) {
  try {
    read_png("/nonexistent/x.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/x.png"), std::string::npos);
  }
}

TEST(Metrics, CsvRoundTripWithBlankPeriodicCells) {
  TempDir dir;
  MetricsRow a;
  a.iter = 3;
  a.loss_d = 1.25;
  a.lr_g = 5e-5;
  MetricsRow b = a;
  b.iter = 4;
  b.proxy_distance = 0.1;
  b.blocking_score = 0.2;
  {
    MetricsWriter w(dir / "m.csv");
    w.write(a);
    w.write(b);
  }
  const auto rows = read_metrics(dir / "m.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(bit_identical(rows[0], a));
  EXPECT_TRUE(bit_identical(rows[1], b));
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, metrics_header());
}

TEST(Dataset, DeterministicPerIndex) {
  DatasetSpec spec;
  const Dataset a(spec), b(spec);
  EXPECT_TRUE(bit_equal(a.image(17), b.image(17)));
  EXPECT_FALSE(bit_equal(a.image(17), a.image(18)));
  for (double v : a.image(5).data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  spec.seed = 2;
  EXPECT_FALSE(bit_equal(a.image(17), Dataset(spec).image(17)));
}

TEST(Dataset, TwoBlobsModesBalanced) {
  DatasetSpec spec;
  spec.count = 10000;
  const Dataset d(spec);
  std::int64_t ones = 0;
  for (std::int64_t i = 0; i < d.size(); ++i) ones += d.mode(i);
  // Binomial(10000, 0.5): σ = 50.
  EXPECT_LE(std::abs(double(ones) - 5000.0), 150.0);
}

TEST(Dataset, TwoBlobsBrightestPixelMatchesMode) {
  DatasetSpec spec;
  const Dataset d(spec);
  for (std::int64_t i = 0; i < 50; ++i) {
    const Tensor img = d.image(i);
    const auto data = img.data();
    const auto it = std::max_element(data.begin(), data.end());
    const std::int64_t pix = (it - data.begin()) / 3;
    const std::int64_t row = pix / spec.image_size;
    EXPECT_EQ(row >= spec.image_size / 2, d.mode(i) == 1) << i;
  }
}

TEST(Dataset, EmptyAndOutOfRange) {
  DatasetSpec spec;
  spec.count = 0;
  const Dataset d(spec);
  EXPECT_EQ(d.size(), 0);
  EXPECT_THROW(d.image(0), ContractError);
  RunConfig c = micro_run();
  c.dataset.count = 0;
  EXPECT_THROW(run_training(c), ConfigError);
}

TEST(Dataset, OtherSyntheticKinds) {
  for (auto kind : {DatasetKind::RingGaussians, DatasetKind::CheckerShapes}) {
    DatasetSpec spec;
    spec.kind = kind;
    spec.image_size = 16;
    const Dataset d(spec);
    EXPECT_EQ(d.image(0).shape(), (Shape{16, 16, 3}));
    EXPECT_TRUE(bit_equal(d.image(3), Dataset(spec).image(3)));
  }
}

TEST(Dataset, ImageFolder) {
  TempDir dir;
  DatasetSpec synth;
  synth.image_size = 8;
  const Dataset src(synth);
  write_png(dir / "b.png", src.image(1));
  write_png(dir / "a.png", src.image(0));
  DatasetSpec spec;
  spec.kind = DatasetKind::ImageFolder;
  spec.image_size = 8;
  spec.path = dir.str();
  const Dataset d(spec);
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(png_bytes_of(d.image(0)), png_bytes_of(src.image(0)));
  spec.image_size = 16;
  EXPECT_THROW((Dataset(spec)), ConfigError);
}

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
  TempDir dir;
  const RunConfig c = micro_run();
  Trainer t = make_trainer(c);
  const Dataset data(c.dataset);
  t.step(data.batch({0, 1}));
  save_checkpoint(dir / "a.bin", capture_checkpoint(t, serialize_config(c)));
  save_checkpoint(dir / "b.bin", load_checkpoint(dir / "a.bin"));
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
}

TEST(Checkpoint, CorruptionDetected) {
  TempDir dir;
  const RunConfig c = micro_run();
  const Trainer t = make_trainer(c);
  const std::string bytes = encode_checkpoint(capture_checkpoint(t, serialize_config(c)));

  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), IntegrityError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 5)), IntegrityError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), IntegrityError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IntegrityError);

  std::string versioned = bytes;
  versioned[8] = 2;  // u32 version follows the 8-byte magic
  EXPECT_THROW(decode_checkpoint(versioned), VersionError);

  write_file_atomic(dir / "t.bin", bytes.substr(0, bytes.size() - 3));
  try {
    load_checkpoint(dir / "t.bin");
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("t.bin"), std::string::npos);
  }
}

TEST(Checkpoint, MismatchedRestoreAppliesNothing) {
  const RunConfig c = micro_run();
  RunConfig other = c;
  other.generator.scales[1].channels = 8;
  const Trainer src = make_trainer(other);
  Checkpoint ckpt = capture_checkpoint(src, serialize_config(other));
  Trainer dst = make_trainer(c);
  const Checkpoint before = capture_checkpoint(dst, serialize_config(c));
  EXPECT_THROW(restore_checkpoint(dst, ckpt), IntegrityError);
  EXPECT_EQ(encode_checkpoint(capture_checkpoint(dst, serialize_config(c))),
            encode_checkpoint(before));
}

TEST(Checkpoint, RoundTripRestoresRngState) {
  const RunConfig c = micro_run();
  Trainer a = make_trainer(c);
  a.rng().latent.normal();
  a.rng().data.normal();
  const Checkpoint ckpt = decode_checkpoint(encode_checkpoint(capture_checkpoint(a, "")));
  Trainer b = make_trainer(c);
  restore_checkpoint(b, ckpt);
  EXPECT_TRUE(b.rng().latent == a.rng().latent);
  EXPECT_TRUE(b.rng().data == a.rng().data);
  EXPECT_TRUE(b.rng().augment == a.rng().augment);
}

TEST(Run, WritesOneCsvRowPerIteration) {
  TempDir dir;
  RunConfig c = micro_run();
  c.train.total_iters = 4;
  RunOptions opt;
  opt.output_dir = dir.str();
  const RunResult r = run_training(c, opt);
  EXPECT_EQ(r.iterations, 4);
  const auto rows = read_metrics(dir / "metrics.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_TRUE(std::isnan(rows[0].proxy_distance));
  EXPECT_FALSE(std::isnan(rows[1].proxy_distance));
  EXPECT_TRUE(fs::exists(dir / "checkpoint_final.bin"));
  EXPECT_TRUE(fs::exists(dir / "samples.png"));
  EXPECT_EQ(load_config(dir / "config.ini"), c);
}

TEST(Run, IdenticalSeedsGiveBitIdenticalMetrics) {
  const RunConfig c = micro_run();
  const RunResult a = run_training(c), b = run_training(c);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_TRUE(bit_identical(a.rows[i], b.rows[i]));
  RunConfig other = c;
  other.train.seed = 8;
  EXPECT_FALSE(bit_identical(run_training(other).rows.back(), a.rows.back()));
}

TEST(Run, ResumeReplaysBitIdentically) {
  TempDir dir;
  RunConfig c = micro_run();
  c.checkpoint_interval = 3;
  RunOptions full;
  full.output_dir = dir / "full";
  const RunResult whole = run_training(c, full);

  RunOptions first;
  first.output_dir = dir / "split";
  first.stop_at = 3;
  run_training(c, first);
  RunOptions second = first;
  second.stop_at = -1;
  second.resume_from = dir / "split/checkpoint_3.bin";
  const RunResult rest = run_training(c, second);

  ASSERT_EQ(rest.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(bit_identical(rest.rows[i], whole.rows[i + 3])) << i;
  const auto a = read_metrics(dir / "full/metrics.csv");
  const auto b = read_metrics(dir / "split/metrics.csv");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_identical(a[i], b[i])) << i;
  EXPECT_EQ(read_file(dir / "full/checkpoint_final.bin"), read_file(dir / "split/checkpoint_final.bin"));
}

TEST(Run, ResumeRejectsForeignConfig) {
  TempDir dir;
  RunConfig c = micro_run();
  RunOptions opt;
  opt.output_dir = dir.str();
  opt.stop_at = 2;
  run_training(c, opt);
  c.train.lr_d = 1e-3;
  RunOptions resume;
  resume.resume_from = dir / "checkpoint_final.bin";
  EXPECT_THROW(run_training(c, resume), ConfigError);
}

TEST(Run, OutputRootOverride) {
  ::setenv("STYLESWIN_OUTPUT_ROOT", "/tmp/root", 1);
  EXPECT_EQ(resolve_output_dir("run"), "/tmp/root/run");
  EXPECT_EQ(resolve_output_dir("/abs/run"), "/abs/run");
  ::unsetenv("STYLESWIN_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir("run"), "run");
}
