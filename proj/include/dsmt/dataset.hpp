#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsmt/volume.hpp"

namespace dsmt {

// One row of the sidecar label table that accompanies NIfTI datasets.
struct LabelRow {
  std::string subject_id;
  double age = 0.0;
  int sex = 0;
  std::string site;
  std::string split;  // "train", "val", or empty
};

using LabelTable = std::map<std::string, LabelRow>;

// Delimited text with header: subject_id,age,sex,site,split.
LabelTable read_label_table(const std::string& path);
void write_label_table(const std::string& path,
                       const std::vector<LabelRow>& rows);

// Dataset manifest: one row per sample with header path,subject_id,split.
// Relative paths are resolved against the manifest's directory.
struct ManifestEntry {
  std::string path;
  std::string subject_id;
  std::string split;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

// Loads a raw volume plus labels. Phantom containers are self-labeled;
// NIfTI volumes require a sidecar row keyed by the file stem.
VolumeSample load_volume(const std::string& path,
                         const LabelTable* labels = nullptr);

// Filename without directories or recognised volume extensions.
std::string subject_id_from_path(const std::string& path);

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<double> age_bins;  // bin edges used for stratification
};

struct SplitInput {
  std::string id;
  double age = 0.0;
  int sex = 0;
};

// Stratified split preserving the sex proportion within each age bin to
// within one sample per (bin, sex) cell; deterministic given the seed.
DatasetSplit make_split(const std::vector<SplitInput>& samples,
                        double val_fraction,
                        const std::vector<double>& age_bins,
                        std::uint64_t seed);
DatasetSplit make_split(const std::vector<VolumeSample>& samples,
                        double val_fraction,
                        const std::vector<double>& age_bins,
                        std::uint64_t seed);

}  // namespace dsmt
