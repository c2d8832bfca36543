#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "invbench/dataset.hpp"

namespace invbench::data {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(Dataset, DesignsWithinBounds) {
  em::StackModel stack;
  const auto d = generate_dataset(stack, {300, 50, 10}, 4);
  EXPECT_EQ(d.size(), 360u);
  EXPECT_NO_THROW(d.validate(stack.spec()));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_TRUE(stack.spec().contains(d.design(i)));
}

TEST(Dataset, SplitCountsFloorToValAndTest) {
  const auto c = split_counts(101, {0.7, 0.2, 0.1});
  EXPECT_EQ(c.val, 20u);
  EXPECT_EQ(c.test, 10u);
  EXPECT_EQ(c.train, 71u);
  EXPECT_THROW(split_counts(10, {0.5, 0.6, 0.0}), ConfigError);
  const auto full = paper_scale_counts("stack");
  EXPECT_EQ(full.train, 40000u);
  EXPECT_EQ(full.val, 10000u);
  EXPECT_EQ(full.test, 500u);
}

TEST(Dataset, ThreadCountInvariant) {
  em::ToyModel toy;
  const auto a = generate_dataset(toy, {64, 16, 8}, 99, 1);
  const auto b = generate_dataset(toy, {64, 16, 8}, 99, 3);
  EXPECT_EQ(a.designs, b.designs);
  EXPECT_EQ(a.spectra, b.spectra);
}

TEST(Dataset, SameSeedSameFiles) {
  em::ToyModel toy;
  const auto dir = std::filesystem::temp_directory_path() / "invbench_dataset_test";
  std::filesystem::remove_all(dir);
  for (const char* name : {"a.csv", "b.csv"}) {
    save_dataset(generate_dataset(toy, 100, 7, SplitFractions{}), toy.spec(), dir / name);
  }
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(manifest_path(dir / "a.csv")), slurp(manifest_path(dir / "b.csv")));

  const auto back = load_dataset(dir / "a.csv");
  const auto orig = generate_dataset(toy, 100, 7, SplitFractions{});
  EXPECT_EQ(back.designs, orig.designs);
  EXPECT_EQ(back.spectra, orig.spectra);
  EXPECT_EQ(back.splits, orig.splits);
  EXPECT_EQ(back.task, "toy");
  EXPECT_EQ(back.seed, 7u);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, MissingFile) { EXPECT_THROW(load_dataset("/nonexistent/x.csv"), MissingArtifact); }

}  // namespace
}  // namespace invbench::data
