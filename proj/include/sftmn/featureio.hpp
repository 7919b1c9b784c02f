#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sftmn/tensor.hpp"

namespace sftmn {

/// Class index ↔ name table. Indices are exactly 0..C−1; names are unique
/// and non-empty.
class ClassMapping {
 public:
  ClassMapping() = default;
  // Position in `names` is the class index.
  explicit ClassMapping(std::vector<std::string> names);
  // Entries may come in any order; throws ValidationError on gaps/duplicates.
  static ClassMapping from_entries(std::vector<std::pair<int, std::string>> entries);

  std::size_t size() const { return names_.size(); }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  std::optional<int> index_of(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  // "index name" per line, the mapping.txt format.
  std::string to_text() const;

  friend bool operator==(const ClassMapping&, const ClassMapping&) = default;

 private:
  std::vector<std::string> names_;
};

ClassMapping parse_mapping(const std::filesystem::path& path);
ClassMapping parse_mapping_text(const std::string& text);

struct FeatureSequence {
  Tensor values;  // D × T
  double frame_rate_hz = 1.0;

  std::size_t dim() const { return values.rows(); }
  std::size_t frames() const { return values.cols(); }
  void validate() const;  // D ≥ 1, T ≥ 1, finite
};

struct LabelSequence {
  std::vector<int> labels;
  ClassMapping mapping;

  std::size_t size() const { return labels.size(); }
  void validate() const;  // every label in [0, C)
};

struct VideoSample {
  std::string id;
  FeatureSequence features;
  LabelSequence labels;
};

// Orientation of 2-D arrays in NPY files. Raw files always store D × T.
enum class FeatureLayout { DxT, TxD };
enum class FeatureFormat { Npy, Raw };

FeatureLayout feature_layout_from_string(const std::string& s);
std::string to_string(FeatureLayout layout);
FeatureFormat feature_format_from_string(const std::string& s);
std::string extension(FeatureFormat format);  // ".npy" | ".sftmn"

// Reads an NPY (v1/v2, little-endian f4/f8, C or Fortran order) or raw
// "SFTMN1 D T\n" file, chosen by extension, normalized to D × T.
FeatureSequence read_features(const std::filesystem::path& path, FeatureLayout layout);
// Writes float32 data; NPY output uses `layout` orientation.
void write_features(const std::filesystem::path& path, const FeatureSequence& features,
                    FeatureFormat format, FeatureLayout layout);

LabelSequence read_labels(const std::filesystem::path& path, const ClassMapping& mapping);
void write_labels(const std::filesystem::path& path, const LabelSequence& labels);

// Video ids from a split bundle; a trailing ".txt" is stripped.
std::vector<std::string> read_split(const std::filesystem::path& path);

/// Loads `<root>/features/<id>.{npy,sftmn}` and `<root>/groundTruth/<id>.txt`
/// for every id of the split, in split order.
std::vector<VideoSample> load_dataset(const std::filesystem::path& root,
                                      const std::filesystem::path& split_file,
                                      const ClassMapping& mapping, FeatureLayout layout);

struct SyntheticSpec {
  int num_videos = 5;
  int num_classes = 7;
  int feature_dim = 16;
  int min_length = 200;
  int max_length = 400;
  double mean_segment = 40.0;
  double noise = 0.0;
  double separation = 1.0;  // norm of each class prototype
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<VideoSample> videos;
  ClassMapping mapping;
};

/// Piecewise-constant label tracks whose frames are class prototypes plus
/// Gaussian noise. Feature values are float32-representable so the dataset
/// survives a write/read cycle bitwise.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Writes the public directory layout: features/, groundTruth/, mapping.txt
// and splits/<split_name>.bundle.
void write_dataset(const std::filesystem::path& root, std::span<const VideoSample> videos,
                   const ClassMapping& mapping, const std::string& split_name,
                   FeatureFormat format, FeatureLayout layout);

}  // namespace sftmn
