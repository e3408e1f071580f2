#include "dsmt/dataset.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "dsmt/metrics.hpp"
#include "dsmt/nifti.hpp"
#include "dsmt/phantom.hpp"

using namespace dsmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::path(testing::TempDir()) / name;
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(LabelTable, RoundTripAndParsing) {
  const auto dir = temp_dir("labels");
  const auto path = (dir / "labels.csv").string();
  write_label_table(path, {{"s01", 31.5, 0, "siteA", "train"},
                           {"s02", 64.0, 1, "siteB", "val"}});
  auto table = read_label_table(path);
  ASSERT_EQ(table.size(), 2u);
  EXPECT_DOUBLE_EQ(table.at("s01").age, 31.5);
  EXPECT_EQ(table.at("s01").sex, 0);
  EXPECT_EQ(table.at("s02").site, "siteB");
  EXPECT_EQ(table.at("s02").split, "val");
}

TEST(LabelTable, AcceptsTextualSexAndRejectsGarbage) {
  const auto dir = temp_dir("labels2");
  const auto path = (dir / "labels.csv").string();
  {
    std::ofstream f(path);
    f << "subject_id,age,sex,site,split\n";
    f << "s01,40,M,siteA,train\n";
    f << "s02,50,female,siteA,val\n";
  }
  auto table = read_label_table(path);
  EXPECT_EQ(table.at("s01").sex, 1);
  EXPECT_EQ(table.at("s02").sex, 0);
  {
    std::ofstream f(path);
    f << "subject_id,age,sex,site,split\n";
    f << "s01,40,X,siteA,train\n";
  }
  EXPECT_THROW(read_label_table(path), FormatError);
  {
    std::ofstream f(path);
    f << "subject_id,age,sex,site,split\n";
    f << "s01,-3,M,siteA,train\n";
  }
  EXPECT_THROW(read_label_table(path), FormatError);
}

TEST(Manifest, RoundTripResolvesRelativePaths) {
  const auto dir = temp_dir("manifest");
  const auto path = (dir / "manifest.csv").string();
  write_manifest(path, {{"vol/s01.dsmt", "s01", "train"},
                        {"/abs/s02.dsmt", "s02", "val"}});
  auto entries = read_manifest(path);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].path, (dir / "vol/s01.dsmt").string());
  EXPECT_EQ(entries[1].path, "/abs/s02.dsmt");
  EXPECT_EQ(entries[0].split, "train");
}

TEST(LoadVolume, PhantomRoundTripIsSelfLabeled) {
  const auto dir = temp_dir("load_phantom");
  PhantomConfig cfg;
  cfg.side = 16;
  auto s = generate_phantom(47.0, 1, cfg, 13);
  const auto path = (dir / "subj42.dsmt").string();
  write_phantom(path, s);
  auto loaded = load_volume(path);
  EXPECT_EQ(loaded.subject_id, "subj42");
  EXPECT_DOUBLE_EQ(loaded.age, 47.0);
  EXPECT_EQ(loaded.sex, 1);
  for (std::size_t i = 0; i < s.voxels.numel(); ++i)
    EXPECT_EQ(loaded.voxels[i], s.voxels[i]);
}

TEST(LoadVolume, NiftiNeedsSidecarRow) {
  const auto dir = temp_dir("load_nifti");
  Tensor v({6, 5, 4});
  for (std::size_t i = 0; i < v.numel(); ++i)
    v[i] = static_cast<double>(i) * 0.25;
  const auto path = (dir / "s99.nii").string();
  write_nifti(path, v);

  // Round trip through the reader (f32 payload, exact for these values).
  auto back = read_nifti(path);
  ASSERT_TRUE(back.same_shape(v));
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_EQ(back[i], v[i]);

  EXPECT_THROW(load_volume(path, nullptr), MetadataError);
  LabelTable empty;
  EXPECT_THROW(load_volume(path, &empty), MetadataError);

  LabelTable table;
  table["s99"] = {"s99", 52.0, 0, "siteC", "train"};
  auto sample = load_volume(path, &table);
  EXPECT_DOUBLE_EQ(sample.age, 52.0);
  EXPECT_EQ(sample.sex, 0);
  EXPECT_EQ(sample.site_id, "siteC");
}

TEST(LoadVolume, GzippedNiftiReads) {
  const auto dir = temp_dir("load_nii_gz");
  Tensor v({5, 5, 5});
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = 1.0 + (i % 7);
  const auto path = (dir / "s01.nii.gz").string();
  write_nifti(path, v);
  auto back = read_nifti(path);
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_EQ(back[i], v[i]);
}

TEST(LoadVolume, TruncatedNiftiRejected) {
  const auto dir = temp_dir("load_trunc");
  Tensor v({8, 8, 8}, 1.0);
  const auto path = (dir / "bad.nii").string();
  write_nifti(path, v);
  fs::resize_file(path, 400);
  EXPECT_THROW(load_volume(path, nullptr), FormatError);
  EXPECT_THROW(load_volume((dir / "missing.nii").string(), nullptr),
               FormatError);
}

TEST(MakeSplit, BasicPartition) {
  std::vector<SplitInput> samples;
  for (int i = 0; i < 100; ++i)
    samples.push_back({"id" + std::to_string(i), 20.0 + i % 60,
                       i % 2});
  auto split = make_split(samples, 0.2, kDefaultBracketEdges, 1);
  EXPECT_EQ(split.train_ids.size(), 80u);
  EXPECT_EQ(split.val_ids.size(), 20u);
  std::set<std::string> train(split.train_ids.begin(), split.train_ids.end());
  std::set<std::string> val(split.val_ids.begin(), split.val_ids.end());
  std::set<std::string> inter;
  std::set_intersection(train.begin(), train.end(), val.begin(), val.end(),
                        std::inserter(inter, inter.begin()));
  EXPECT_TRUE(inter.empty());
  EXPECT_EQ(train.size() + val.size(), samples.size());
}

TEST(MakeSplit, SingleCellKeepsProportion) {
  std::vector<SplitInput> samples;
  for (int i = 0; i < 40; ++i)
    samples.push_back({"id" + std::to_string(i), 30.0, 0});
  auto split = make_split(samples, 0.25, kDefaultBracketEdges, 3);
  EXPECT_EQ(split.val_ids.size(), 10u);
  EXPECT_EQ(split.train_ids.size(), 30u);
}

TEST(MakeSplit, ExactPerCellCounts) {
  // 10 bins x 2 sexes x 10 samples each, val_fraction 0.2 -> 2 val per cell.
  const std::vector<double> edges = {10, 20, 30, 40, 50, 60, 70, 80, 90};
  std::vector<SplitInput> samples;
  int id = 0;
  for (int bin = 0; bin < 10; ++bin)
    for (int sex = 0; sex < 2; ++sex)
      for (int k = 0; k < 10; ++k)
        samples.push_back(
            {"id" + std::to_string(id++), 5.0 + 10.0 * bin, sex});
  auto split = make_split(samples, 0.2, edges, 5);
  EXPECT_EQ(split.val_ids.size(), 40u);
  // Count val membership per cell.
  std::map<std::string, SplitInput> by_id;
  for (const auto& s : samples) by_id[s.id] = s;
  std::map<std::pair<int, int>, int> val_per_cell;
  for (const auto& vid : split.val_ids) {
    const auto& s = by_id[vid];
    val_per_cell[{static_cast<int>((s.age - 5.0) / 10.0), s.sex}]++;
  }
  ASSERT_EQ(val_per_cell.size(), 20u);
  for (const auto& [cell, count] : val_per_cell) EXPECT_EQ(count, 2);
}

TEST(MakeSplit, DeterministicGivenSeed) {
  std::vector<SplitInput> samples;
  for (int i = 0; i < 37; ++i)
    samples.push_back({"id" + std::to_string(i), 21.0 + (i * 13) % 55,
                       (i * 7) % 2});
  auto a = make_split(samples, 0.3, kDefaultBracketEdges, 9);
  auto b = make_split(samples, 0.3, kDefaultBracketEdges, 9);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.val_ids, b.val_ids);
  auto c = make_split(samples, 0.3, kDefaultBracketEdges, 10);
  EXPECT_NE(a.val_ids, c.val_ids);
}

TEST(MakeSplit, RejectsBadInput) {
  EXPECT_THROW(make_split(std::vector<SplitInput>{}, 0.2, {}, 1),
               ParameterError);
  std::vector<SplitInput> bad_age = {{"a", -1.0, 0}};
  EXPECT_THROW(make_split(bad_age, 0.2, {}, 1), ParameterError);
  std::vector<SplitInput> bad_sex = {{"a", 30.0, 2}};
  EXPECT_THROW(make_split(bad_sex, 0.2, {}, 1), ParameterError);
}
