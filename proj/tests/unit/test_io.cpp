#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lgseg/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace lgseg;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lgseg_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Ppm, RoundTripIsExactOn8BitValues) {
  DenseMap img(3, 5, 3);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values.data()[i] = static_cast<double>(i * 7 % 256) / 255.0;
  const auto p = scratch("rt.ppm");
  io::write_ppm(p, img);
  const DenseMap back = io::read_ppm(p);
  ASSERT_EQ(back.size(), img.size());
  EXPECT_EQ(back.values, img.values);
}

TEST(Ppm, RejectsWrongMagicAndTruncation) {
  const auto p = scratch("bad.ppm");
  {
    std::ofstream(p) << "P5\n2 2\n255\nxxxx";
  }
  EXPECT_THROW(io::read_ppm(p), IngestionError);
  {
    std::ofstream(p) << "P6\n2 2\n255\nab";
  }
  EXPECT_THROW(io::read_ppm(p), IngestionError);
  EXPECT_THROW(io::read_ppm(scratch("missing.ppm")), IngestionError);
}

TEST(Pgm, SixteenBitLabelsRoundTrip) {
  LabelMap m(4, 3);
  for (size_t i = 0; i < m.ids.size(); ++i) m.ids[i] = static_cast<int32_t>(i * 5000 % 65536);
  const auto p = scratch("rt.pgm");
  io::write_pgm_labels(p, m);
  EXPECT_EQ(io::read_pgm_labels(p), m);
  LabelMap bad(1, 1, 70000);
  EXPECT_THROW(io::write_pgm_labels(p, bad), ShapeError);
}

TEST(DenseArray, RealAndLabelRoundTripWithMeta) {
  std::mt19937_64 rng(3);
  const DenseMap m = testutil::random_map(rng, 4, 6, 5);
  const auto p = scratch("rt.lgda");
  io::write_dense_array(p, m, "hello");
  std::string meta;
  const DenseMap back = io::read_dense_array(p, &meta);
  EXPECT_EQ(meta, "hello");
  EXPECT_EQ(back.size(), m.size());
  EXPECT_EQ(back.values, m.values);

  const LabelMap l = testutil::random_labels(rng, 5, 2, 9);
  io::write_label_array(p, l);
  EXPECT_EQ(io::read_label_array(p), l);
  EXPECT_EQ(io::read_label_file(p), l);
  EXPECT_THROW(io::read_dense_array(p), IngestionError);  // dtype mismatch
}

TEST(DenseArray, CorruptFilesAreIngestionErrors) {
  const auto p = scratch("corrupt.lgda");
  {
    std::ofstream(p, std::ios::binary) << "LGDX";
  }
  EXPECT_THROW(io::read_dense_array(p), IngestionError);
  std::mt19937_64 rng(4);
  io::write_dense_array(p, testutil::random_map(rng, 2, 2, 2));
  fs::resize_file(p, fs::file_size(p) - 3);
  EXPECT_THROW(io::read_dense_array(p), IngestionError);
}

TEST(Hashing, Fnv1aReferenceValues) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::fnv1a("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(io::hex64(0xabcULL), "0000000000000abc");
}

TEST(Hashing, MixSeedSeparatesStreams) {
  EXPECT_EQ(io::mix_seed(1, 2, 3, 4), io::mix_seed(1, 2, 3, 4));
  EXPECT_NE(io::mix_seed(1, 2, 3, 4), io::mix_seed(1, 2, 4, 3));
  EXPECT_NE(io::mix_seed(1, 2), io::mix_seed(2, 1));
}
