#include <gtest/gtest.h>

#include <filesystem>

#include "lgseg/config.hpp"
#include "lgseg/io.hpp"
#include "lgseg/synth.hpp"

using namespace lgseg;
namespace fs = std::filesystem;

TEST(RunConfig, EmptyObjectGivesDefaults) {
  const RunConfig c = RunConfig::parse("{}");
  EXPECT_EQ(c.training.kappa, 10.0);
  EXPECT_EQ(c.training.batch_size, 8);
  EXPECT_EQ(c.evaluation.knn_k, 20);
  EXPECT_EQ(c.encoder.kind, "stub");
  EXPECT_TRUE(c.deterministic);
}

TEST(RunConfig, ReadsNestedValues) {
  const RunConfig c = RunConfig::parse(R"({
    "train": {"iterations": 50, "weights": {"semantic": 0}, "arch": {"hidden": [8], "embed_dim": 4},
              "augment": {"flip_prob": 0.25, "out_height": 16, "out_width": 12}},
    "eval": {"classes": ["a", "b"], "known": ["a"], "unknown": ["b"], "fold": 2, "track_radius": 5},
    "slic": {"n_regions": 9}
  })");
  EXPECT_EQ(c.training.iterations, 50);
  EXPECT_EQ(c.training.weights, (LossWeights{1, 1, 0}));
  EXPECT_EQ(c.training.arch.hidden, std::vector<int>{8});
  EXPECT_EQ(c.training.augment.out_size, (Size{16, 12}));
  EXPECT_EQ(c.training.augment.flip_prob, 0.25);
  EXPECT_EQ(c.evaluation.split.unknown, std::vector<std::string>{"b"});
  EXPECT_EQ(c.evaluation.split.fold, 2);
  EXPECT_EQ(c.evaluation.propagation.radius, 5);
  EXPECT_EQ(c.slic.n_regions, 9);
}

TEST(RunConfig, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(RunConfig::parse(R"({"trian": {}})"), ConfigError);
  EXPECT_THROW(RunConfig::parse(R"({"train": {"iteration": 5}})"), ConfigError);
  EXPECT_THROW(RunConfig::parse(R"({"train": {"weights": {"contrast": 1}}})"), ConfigError);
  EXPECT_THROW(RunConfig::parse(R"({"eval": {"k": 3}})"), ConfigError);
}

TEST(RunConfig, WrongTypesAndBadJsonRejected) {
  EXPECT_THROW(RunConfig::parse(R"({"train": {"iterations": "many"}})"), ConfigError);
  EXPECT_THROW(RunConfig::parse("{"), ConfigError);
}

TEST(RunConfig, RelativePathsResolveAgainstBase) {
  const RunConfig c = RunConfig::parse(R"({"train_data": {"images": "imgs"}, "output": "/abs/out"})", "/base/dir");
  EXPECT_EQ(c.train.images, fs::path("/base/dir/imgs"));
  EXPECT_EQ(c.output, fs::path("/abs/out"));
}

TEST(RunConfig, HashIgnoresOutputButTracksSettings) {
  const RunConfig a = RunConfig::parse(R"({"output": "x"})");
  const RunConfig b = RunConfig::parse(R"({"output": "y"})");
  const RunConfig c = RunConfig::parse(R"({"train": {"seed": 4}})");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
  EXPECT_EQ(RunConfig::parse(a.canonical_json()).canonical_json(), a.canonical_json());
}

TEST(RunConfig, ValidateChecksPathsAndRanges) {
  const fs::path dir = fs::temp_directory_path() / "lgseg_config_test";
  fs::remove_all(dir);
  synth::CorpusOptions o;
  o.train_images = 2;
  o.eval_images = 1;
  synth::write_corpus(dir, o);
  const RunConfig good = RunConfig::load(dir / "config.json");
  EXPECT_NO_THROW(good.validate());

  RunConfig missing = good;
  missing.train.gt = dir / "nowhere";
  EXPECT_THROW(missing.validate(), ConfigError);
  RunConfig overlap = good;
  overlap.evaluation.split.unknown.push_back(overlap.evaluation.split.known.front());
  EXPECT_THROW(overlap.validate(), ConfigError);
  RunConfig stranger = good;
  stranger.evaluation.split.known.push_back("zebra");
  EXPECT_THROW(stranger.validate(), ConfigError);
  RunConfig bad_palette = good;
  bad_palette.encoder.palette = dir / "none.json";
  EXPECT_THROW(bad_palette.validate(), ConfigError);
  EXPECT_THROW(RunConfig::load(dir / "absent.json"), ConfigError);
  fs::remove_all(dir);
}

TEST(ClassSplit, DisjointAndUnique) {
  EXPECT_NO_THROW((ClassSplit{{"a", "b"}, {"c"}, 0}.validate()));
  EXPECT_THROW((ClassSplit{{"a", "a"}, {}, 0}.validate()), ConfigError);
  EXPECT_THROW((ClassSplit{{"a"}, {"a"}, 0}.validate()), ConfigError);
}
