#include "sftmn/featureio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sftmn/errors.hpp"
#include "sftmn/random.hpp"

namespace sftmn {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(std::string("cannot open ") + what + " " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open feature file " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// Lines with trailing blank lines dropped; '\r' stripped.
std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

struct NpyHeader {
  char type = 'f';
  std::size_t word = 4;
  bool fortran = false;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;
};

std::string dict_value(const std::string& dict, const std::string& key, const fs::path& path) {
  const auto k = dict.find("'" + key + "'");
  if (k == std::string::npos) throw ParseError(path.string() + ": NPY header lacks '" + key + "'");
  const auto colon = dict.find(':', k);
  if (colon == std::string::npos) throw ParseError(path.string() + ": malformed NPY header");
  std::size_t b = colon + 1;
  while (b < dict.size() && dict[b] == ' ') ++b;
  if (b < dict.size() && dict[b] == '(') {
    const auto e = dict.find(')', b);
    if (e == std::string::npos) throw ParseError(path.string() + ": malformed NPY shape");
    return dict.substr(b, e - b + 1);
  }
  const auto e = dict.find_first_of(",}", b);
  return trim(dict.substr(b, e - b));
}

NpyHeader parse_npy_header(const std::vector<char>& bytes, const fs::path& path) {
  static constexpr char magic[] = "\x93NUMPY";
  if (bytes.size() < 10 || std::memcmp(bytes.data(), magic, 6) != 0)
    throw ParseError(path.string() + ": not an NPY file");
  const int major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, prefix = 0;
  if (major == 1) {
    header_len = load_le<std::uint16_t>(bytes.data() + 8);
    prefix = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw ParseError(path.string() + ": truncated NPY header");
    header_len = load_le<std::uint32_t>(bytes.data() + 8);
    prefix = 12;
  } else {
    throw ParseError(path.string() + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < prefix + header_len) throw ParseError(path.string() + ": truncated NPY header");
  const std::string dict(bytes.data() + prefix, header_len);

  NpyHeader h;
  h.data_offset = prefix + header_len;
  std::string descr = dict_value(dict, "descr", path);
  descr.erase(std::remove(descr.begin(), descr.end(), '\''), descr.end());
  if (descr == "<f4" || descr == "|f4") {
    h.word = 4;
  } else if (descr == "<f8") {
    h.word = 8;
  } else {
    throw ParseError(path.string() + ": unsupported NPY dtype '" + descr +
                     "' (expected little-endian float32/float64)");
  }
  h.fortran = dict_value(dict, "fortran_order", path) == "True";
  const std::string shape = dict_value(dict, "shape", path);
  std::string digits;
  for (char c : shape) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits += c;
    } else if (!digits.empty()) {
      h.shape.push_back(std::stoull(digits));
      digits.clear();
    }
  }
  if (h.shape.size() != 2)
    throw ParseError(path.string() + ": expected a 2-D feature array, shape " + shape);
  return h;
}

FeatureSequence read_npy(const fs::path& path, FeatureLayout layout) {
  const auto bytes = read_bytes(path);
  const NpyHeader h = parse_npy_header(bytes, path);
  const std::size_t r = h.shape[0], c = h.shape[1];
  if (bytes.size() < h.data_offset + r * c * h.word)
    throw ParseError(path.string() + ": NPY data shorter than its shape");
  // Stored element (i, j) of the r × c array.
  auto at = [&](std::size_t i, std::size_t j) {
    const std::size_t flat = h.fortran ? j * r + i : i * c + j;
    const char* p = bytes.data() + h.data_offset + flat * h.word;
    return h.word == 4 ? static_cast<double>(load_le<float>(p)) : load_le<double>(p);
  };
  FeatureSequence fsq;
  if (layout == FeatureLayout::DxT) {
    fsq.values = Tensor(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) fsq.values(i, j) = at(i, j);
  } else {
    fsq.values = Tensor(c, r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) fsq.values(j, i) = at(i, j);
  }
  return fsq;
}

FeatureSequence read_raw(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw ParseError(path.string() + ": missing SFTMN1 header line");
  std::istringstream header(std::string(bytes.begin(), nl));
  std::string tag;
  long long d = -1, t = -1;
  header >> tag >> d >> t;
  if (tag != "SFTMN1" || !header || d < 1 || t < 1)
    throw ParseError(path.string() + ": malformed SFTMN1 header");
  const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  const std::size_t n = static_cast<std::size_t>(d) * static_cast<std::size_t>(t);
  if (bytes.size() != offset + n * 4)
    throw ParseError(path.string() + ": payload size does not match header dims");
  FeatureSequence fsq;
  fsq.values = Tensor(static_cast<std::size_t>(d), static_cast<std::size_t>(t));
  for (std::size_t i = 0; i < n; ++i)
    fsq.values.data()[i] = static_cast<double>(load_le<float>(bytes.data() + offset + 4 * i));
  return fsq;
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

ClassMapping::ClassMapping(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ValidationError("class " + std::to_string(i) + " has an empty name");
    if (!seen.insert(names_[i]).second)
      throw ValidationError("duplicate class name '" + names_[i] + "'");
  }
}

ClassMapping ClassMapping::from_entries(std::vector<std::pair<int, std::string>> entries) {
  std::map<int, std::string> by_index;
  for (auto& [idx, name] : entries) {
    if (idx < 0) throw ValidationError("negative class index " + std::to_string(idx));
    if (!by_index.emplace(idx, std::move(name)).second)
      throw ValidationError("duplicate class index " + std::to_string(idx));
  }
  std::vector<std::string> names;
  int expected = 0;
  for (auto& [idx, name] : by_index) {
    if (idx != expected)
      throw ValidationError("class index " + std::to_string(expected) + " is missing");
    names.push_back(std::move(name));
    ++expected;
  }
  return ClassMapping(std::move(names));
}

std::optional<int> ClassMapping::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

std::string ClassMapping::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) out += std::to_string(i) + " " + names_[i] + "\n";
  return out;
}

ClassMapping parse_mapping_text(const std::string& text) {
  std::vector<std::pair<int, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto sp = line.find_first_of(" \t");
    const std::string where = "mapping line " + std::to_string(lineno);
    if (sp == std::string::npos) throw ParseError(where + ": expected 'index name'");
    const std::string idx = line.substr(0, sp);
    if (idx.empty() || !std::all_of(idx.begin(), idx.end(),
                                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw ParseError(where + ": index '" + idx + "' is not a non-negative integer");
    entries.emplace_back(std::stoi(idx), trim(line.substr(sp + 1)));
  }
  if (entries.empty()) throw ValidationError("mapping is empty");
  return ClassMapping::from_entries(std::move(entries));
}

ClassMapping parse_mapping(const fs::path& path) {
  return parse_mapping_text(read_text(path, "mapping file"));
}

void FeatureSequence::validate() const {
  if (dim() < 1 || frames() < 1)
    throw ValidationError("feature sequence must be non-empty, got " + values.shape_string());
  if (!values.all_finite()) throw ValidationError("feature sequence contains non-finite values");
  if (!(frame_rate_hz > 0.0)) throw ValidationError("frame rate must be positive");
}

void LabelSequence::validate() const {
  const int C = static_cast<int>(mapping.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || labels[t] >= C)
      throw ValidationError("label " + std::to_string(labels[t]) + " at frame " +
                            std::to_string(t) + " outside [0, " + std::to_string(C) + ")");
  }
}

FeatureLayout feature_layout_from_string(const std::string& s) {
  if (s == "DxT") return FeatureLayout::DxT;
  if (s == "TxD") return FeatureLayout::TxD;
  throw ParseError("feature layout must be DxT or TxD, got '" + s + "'");
}

std::string to_string(FeatureLayout layout) { return layout == FeatureLayout::DxT ? "DxT" : "TxD"; }

FeatureFormat feature_format_from_string(const std::string& s) {
  if (s == "npy") return FeatureFormat::Npy;
  if (s == "raw") return FeatureFormat::Raw;
  throw ParseError("feature format must be npy or raw, got '" + s + "'");
}

std::string extension(FeatureFormat format) {
  return format == FeatureFormat::Npy ? ".npy" : ".sftmn";
}

FeatureSequence read_features(const fs::path& path, FeatureLayout layout) {
  FeatureSequence fsq = path.extension() == ".npy" ? read_npy(path, layout) : read_raw(path);
  fsq.validate();
  return fsq;
}

void write_features(const fs::path& path, const FeatureSequence& features, FeatureFormat format,
                    FeatureLayout layout) {
  const Tensor& v = features.values;
  std::string bytes;
  if (format == FeatureFormat::Raw) {
    bytes = "SFTMN1 " + std::to_string(v.rows()) + " " + std::to_string(v.cols()) + "\n";
    for (double x : v.values()) store_le<float>(bytes, static_cast<float>(x));
  } else {
    const bool dxt = layout == FeatureLayout::DxT;
    const std::size_t r = dxt ? v.rows() : v.cols();
    const std::size_t c = dxt ? v.cols() : v.rows();
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                       std::to_string(r) + ", " + std::to_string(c) + "), }";
    // Pad so magic + version + length + dict + '\n' is a multiple of 64.
    const std::size_t total = 10 + dict.size() + 1;
    dict.append((64 - total % 64) % 64, ' ');
    dict += '\n';
    bytes = std::string("\x93NUMPY\x01\x00", 8);
    store_le<std::uint16_t>(bytes, static_cast<std::uint16_t>(dict.size()));
    bytes += dict;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        store_le<float>(bytes, static_cast<float>(dxt ? v(i, j) : v(j, i)));
  }
  write_file(path, bytes);
}

LabelSequence read_labels(const fs::path& path, const ClassMapping& mapping) {
  LabelSequence seq;
  seq.mapping = mapping;
  const auto lines = lines_of(read_text(path, "label file"));
  seq.labels.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string name = trim(lines[i]);
    const auto idx = mapping.index_of(name);
    if (!idx)
      throw ValidationError(path.string() + " line " + std::to_string(i + 1) +
                            ": unknown label '" + name + "'");
    seq.labels.push_back(*idx);
  }
  return seq;
}

void write_labels(const fs::path& path, const LabelSequence& labels) {
  std::string text;
  for (int l : labels.labels) text += labels.mapping.name(l) + "\n";
  write_file(path, text);
}

std::vector<std::string> read_split(const fs::path& path) {
  std::vector<std::string> ids;
  for (const auto& raw : lines_of(read_text(path, "split file"))) {
    std::string id = trim(raw);
    if (id.empty()) continue;
    if (id.size() > 4 && id.ends_with(".txt")) id.resize(id.size() - 4);
    ids.push_back(std::move(id));
  }
  return ids;
}

std::vector<VideoSample> load_dataset(const fs::path& root, const fs::path& split_file,
                                      const ClassMapping& mapping, FeatureLayout layout) {
  const fs::path features_dir = root / "features";
  const fs::path labels_dir = root / "groundTruth";
  if (!fs::is_directory(features_dir) || !fs::is_directory(labels_dir))
    throw LoadError(root.string() + " must contain features/ and groundTruth/");

  std::vector<VideoSample> samples;
  std::optional<std::size_t> dim;
  for (const auto& id : read_split(split_file)) {
    fs::path feature_path;
    for (const char* ext : {".npy", ".sftmn"}) {
      if (fs::exists(features_dir / (id + ext))) {
        feature_path = features_dir / (id + ext);
        break;
      }
    }
    if (feature_path.empty()) throw LoadError("video " + id + ": no feature file in " + features_dir.string());
    const fs::path label_path = labels_dir / (id + ".txt");
    if (!fs::exists(label_path)) throw LoadError("video " + id + ": missing " + label_path.string());

    VideoSample s;
    s.id = id;
    s.features = read_features(feature_path, layout);
    s.labels = read_labels(label_path, mapping);
    if (s.features.frames() != s.labels.size()) {
      std::string msg = "video " + id + ": " + std::to_string(s.features.frames()) +
                        " feature frames but " + std::to_string(s.labels.size()) + " labels";
      if (s.features.dim() == s.labels.size()) msg += " (check --feature-layout)";
      throw ValidationError(msg);
    }
    if (dim && *dim != s.features.dim())
      throw ValidationError("video " + id + ": feature dim " + std::to_string(s.features.dim()) +
                            " differs from " + std::to_string(*dim));
    dim = s.features.dim();
    samples.push_back(std::move(s));
  }
  return samples;
}

void SyntheticSpec::validate() const {
  if (num_videos < 1 || num_classes < 1 || feature_dim < 1 || min_length < 1 || max_length < 1)
    throw ValidationError("synthetic spec: counts must be positive");
  if (min_length > max_length) throw ValidationError("synthetic spec: min_length > max_length");
  if (!(mean_segment >= 1.0)) throw ValidationError("synthetic spec: mean_segment must be >= 1");
  if (mean_segment > max_length)
    throw ValidationError("synthetic spec: mean segment duration exceeds the maximum video length");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw ValidationError("synthetic spec: noise must be finite and >= 0");
  if (!(separation > 0.0) || !std::isfinite(separation))
    throw ValidationError("synthetic spec: separation must be finite and > 0");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto C = static_cast<std::size_t>(spec.num_classes);
  const auto D = static_cast<std::size_t>(spec.feature_dim);

  // Prototypes: random directions scaled to `separation`; 1-D uses a ladder.
  Tensor prototypes(C, D);
  for (std::size_t c = 0; c < C; ++c) {
    if (D == 1) {
      prototypes(c, 0) = spec.separation * static_cast<double>(c);
      continue;
    }
    double norm = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      prototypes(c, d) = rng.normal();
      norm += prototypes(c, d) * prototypes(c, d);
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < D; ++d) prototypes(c, d) *= spec.separation / norm;
  }

  SyntheticDataset out;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < C; ++c) names.push_back("class_" + std::to_string(c));
  out.mapping = ClassMapping(std::move(names));

  const int width = std::max<int>(3, static_cast<int>(std::to_string(spec.num_videos).size()));
  for (int v = 0; v < spec.num_videos; ++v) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(spec.min_length, spec.max_length));
    std::vector<int> labels;
    labels.reserve(T);
    int prev = -1;
    while (labels.size() < T) {
      const auto dur = static_cast<std::size_t>(
          std::max(1.0, std::round(spec.mean_segment * rng.uniform(0.5, 1.5))));
      int cls;
      if (C == 1) {
        cls = 0;
      } else if (prev < 0) {
        cls = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(C) - 1));
      } else {
        cls = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(C) - 2));
        if (cls >= prev) ++cls;
      }
      for (std::size_t k = 0; k < dur && labels.size() < T; ++k) labels.push_back(cls);
      prev = cls;
    }

    VideoSample s;
    std::string num = std::to_string(v + 1);
    s.id = "video" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(num.size(), width), '0') + num;
    s.features.values = Tensor(D, T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto cls = static_cast<std::size_t>(labels[t]);
      for (std::size_t d = 0; d < D; ++d) {
        const double x = prototypes(cls, d) + spec.noise * rng.normal();
        s.features.values(d, t) = static_cast<double>(static_cast<float>(x));
      }
    }
    s.labels.labels = std::move(labels);
    s.labels.mapping = out.mapping;
    out.videos.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const fs::path& root, std::span<const VideoSample> videos,
                   const ClassMapping& mapping, const std::string& split_name,
                   FeatureFormat format, FeatureLayout layout) {
  fs::create_directories(root / "features");
  fs::create_directories(root / "groundTruth");
  fs::create_directories(root / "splits");
  std::string bundle;
  for (const auto& v : videos) {
    write_features(root / "features" / (v.id + extension(format)), v.features, format, layout);
    write_labels(root / "groundTruth" / (v.id + ".txt"), v.labels);
    bundle += v.id + ".txt\n";
  }
  write_file(root / "mapping.txt", mapping.to_text());
  write_file(root / "splits" / (split_name + ".bundle"), bundle);
}

}  // namespace sftmn
