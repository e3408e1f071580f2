#include "dsmt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsmt/metrics.hpp"
#include "dsmt/nifti.hpp"
#include "dsmt/phantom.hpp"
#include "dsmt/rng.hpp"

namespace fs = std::filesystem;

namespace dsmt {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

int parse_sex(const std::string& s, const std::string& context) {
  if (s == "0" || s == "F" || s == "f" || s == "female") return 0;
  if (s == "1" || s == "M" || s == "m" || s == "male") return 1;
  throw FormatError("bad sex value '" + s + "' in " + context);
}

double parse_age(const std::string& s, const std::string& context) {
  try {
    const double age = std::stod(s);
    if (!(age > 0.0)) throw std::invalid_argument("nonpositive");
    return age;
  } catch (const std::exception&) {
    throw FormatError("bad age value '" + s + "' in " + context);
  }
}

}  // namespace

LabelTable read_label_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open label table " + path);
  std::string line;
  if (!std::getline(f, line))
    throw FormatError("empty label table " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "age" ||
      header[2] != "sex")
    throw FormatError("label table header must start with "
                      "subject_id,age,sex: " + path);
  LabelTable table;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 3)
      throw FormatError("short row in label table " + path);
    LabelRow row;
    row.subject_id = fields[0];
    row.age = parse_age(fields[1], path);
    row.sex = parse_sex(fields[2], path);
    if (fields.size() > 3) row.site = fields[3];
    if (fields.size() > 4) row.split = fields[4];
    table[row.subject_id] = row;
  }
  return table;
}

void write_label_table(const std::string& path,
                       const std::vector<LabelRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write label table " + path);
  f << "subject_id,age,sex,site,split\n";
  for (const auto& r : rows)
    f << r.subject_id << ',' << r.age << ',' << r.sex << ',' << r.site << ','
      << r.split << '\n';
  if (!f) throw IoError("short write to label table " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty manifest " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "path" || header[1] != "subject_id" ||
      header[2] != "split")
    throw FormatError("manifest header must be path,subject_id,split: " +
                      path);
  std::vector<ManifestEntry> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 3) throw FormatError("short manifest row in " + path);
    ManifestEntry e;
    fs::path p(fields[0]);
    e.path = p.is_absolute() ? p.string() : (base / p).string();
    e.subject_id = fields[1];
    e.split = fields[2];
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest " + path);
  f << "path,subject_id,split\n";
  for (const auto& e : entries)
    f << e.path << ',' << e.subject_id << ',' << e.split << '\n';
  if (!f) throw IoError("short write to manifest " + path);
}

std::string subject_id_from_path(const std::string& path) {
  std::string name = fs::path(path).filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".dsmt"}) {
    const std::size_t n = std::strlen(ext);
    if (name.size() > n && name.compare(name.size() - n, n, ext) == 0) {
      name.resize(name.size() - n);
      break;
    }
  }
  return name;
}

VolumeSample load_volume(const std::string& path, const LabelTable* labels) {
  if (!fs::exists(path)) throw FormatError("no such file: " + path);
  if (is_phantom_file(path)) {
    VolumeSample s = read_phantom(path);
    s.subject_id = subject_id_from_path(path);
    if (labels) {
      auto it = labels->find(s.subject_id);
      if (it != labels->end()) s.site_id = it->second.site;
    }
    return s;
  }
  if (has_nifti_extension(path)) {
    VolumeSample s;
    s.voxels = read_nifti(path);
    s.subject_id = subject_id_from_path(path);
    if (!labels)
      throw MetadataError("NIfTI volume needs a sidecar label table: " + path);
    auto it = labels->find(s.subject_id);
    if (it == labels->end())
      throw MetadataError("no label row for subject '" + s.subject_id +
                          "' (" + path + ")");
    s.age = it->second.age;
    s.sex = it->second.sex;
    s.site_id = it->second.site;
    return s;
  }
  throw FormatError("unrecognised volume format: " + path);
}

DatasetSplit make_split(const std::vector<SplitInput>& samples,
                        double val_fraction,
                        const std::vector<double>& age_bins,
                        std::uint64_t seed) {
  if (samples.empty()) throw ParameterError("make_split: no samples");
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0))
    throw ParameterError("make_split: val_fraction outside [0,1]");
  for (const auto& s : samples) {
    if (!(s.age > 0.0)) throw ParameterError("make_split: invalid age");
    if (s.sex != 0 && s.sex != 1)
      throw ParameterError("make_split: invalid sex");
  }

  // Group indices into (age bin, sex) cells.
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int bin =
        age_bins.empty() ? 0 : bracket_index(samples[i].age, age_bins);
    cells[{bin, samples[i].sex}].push_back(i);
  }

  const auto target_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(samples.size())));

  // Largest-remainder apportionment keeps every cell within one sample of
  // its exact proportional share.
  struct CellQuota {
    std::pair<int, int> key;
    std::size_t base;
    double remainder;
  };
  std::vector<CellQuota> quotas;
  std::size_t assigned = 0;
  for (const auto& [key, members] : cells) {
    const double exact = val_fraction * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(exact + 1e-12));
    quotas.push_back({key, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  std::size_t extra = target_val > assigned ? target_val - assigned : 0;
  for (std::size_t i = 0; i < order.size() && extra > 0; ++i) {
    auto& q = quotas[order[i]];
    if (q.remainder <= 0.0) continue;
    if (q.base < cells[q.key].size()) {
      ++q.base;
      --extra;
    }
  }

  DatasetSplit split;
  split.age_bins = age_bins;
  for (const auto& q : quotas) {
    auto members = cells[q.key];
    auto rng = make_rng(seed, static_cast<std::uint64_t>(q.key.first) + 1,
                        static_cast<std::uint64_t>(q.key.second) + 1);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& id = samples[members[i]].id;
      if (i < q.base)
        split.val_ids.push_back(id);
      else
        split.train_ids.push_back(id);
    }
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.val_ids.begin(), split.val_ids.end());
  return split;
}

DatasetSplit make_split(const std::vector<VolumeSample>& samples,
                        double val_fraction,
                        const std::vector<double>& age_bins,
                        std::uint64_t seed) {
  std::vector<SplitInput> in;
  in.reserve(samples.size());
  for (const auto& s : samples)
    in.push_back({s.subject_id, s.age, s.sex});
  return make_split(in, val_fraction, age_bins, seed);
}

}  // namespace dsmt
