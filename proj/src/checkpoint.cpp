#include "sftmn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sftmn/errors.hpp"

namespace sftmn {

namespace {

std::string stage_line(const std::string& path, std::size_t index, const StageSpec& s) {
  return path + " " + std::to_string(index) + " " + to_string(s.kind) + " " +
         std::to_string(s.num_layers) + " " + std::to_string(s.feature_maps) + " " +
         std::to_string(s.num_classes) + " " + std::to_string(s.input_dim) + "\n";
}

void append_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ >= bytes_.size(); }

  std::string line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw ParseError("checkpoint: unexpected end of file");
    std::string l = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return l;
  }

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint: truncated tensor data");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const SfTmnNetwork& network, const ClassMapping& mapping) {
  std::string out = std::string(kCheckpointVersion) + "\n[config]\n";
  out += network.config().to_key_values().to_text();
  out += "[classes]\n" + mapping.to_text();
  out += "[stages]\n";
  const auto& specs = network.stage_specs();
  for (std::size_t i = 0; i < specs.size(); ++i) out += stage_line("slow", i, specs[i]);
  if (network.config().model == ModelKind::SlowFast)
    for (std::size_t i = 0; i < specs.size(); ++i) out += stage_line("fast", i, specs[i]);
  const auto& entries = network.params().entries();
  out += "[tensors] " + std::to_string(entries.size()) + "\n";
  for (const auto& [name, var] : entries) {
    const Tensor& t = var.value();
    out += name + " " + std::to_string(t.rows()) + " " + std::to_string(t.cols()) + "\n";
    for (double v : t.values()) append_f64(out, v);
    out += "\n";
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.line() != kCheckpointVersion)
    throw ParseError(std::string("checkpoint: missing version tag ") + kCheckpointVersion);
  if (in.line() != "[config]") throw ParseError("checkpoint: expected [config]");

  std::string config_text, line;
  while ((line = in.line()) != "[classes]") config_text += line + "\n";
  SfTmnConfig config = SfTmnConfig::from_key_values(KeyValues::parse(config_text));

  std::string classes_text;
  while ((line = in.line()) != "[stages]") classes_text += line + "\n";
  ClassMapping mapping = parse_mapping_text(classes_text);

  std::vector<std::string> stage_lines;
  while (!(line = in.line()).starts_with("[tensors]")) stage_lines.push_back(line);
  std::size_t count = 0;
  {
    std::istringstream hdr(line.substr(9));
    if (!(hdr >> count)) throw ParseError("checkpoint: malformed [tensors] header");
  }

  Checkpoint ckpt{SfTmnNetwork(config), std::move(mapping)};
  if (static_cast<std::size_t>(ckpt.network.config().num_classes) != ckpt.mapping.size())
    throw ValidationError("checkpoint: class table does not match num_classes");

  // Stage list must describe the network the config builds.
  std::string expected;
  const auto& specs = ckpt.network.stage_specs();
  for (std::size_t i = 0; i < specs.size(); ++i) expected += stage_line("slow", i, specs[i]);
  if (config.model == ModelKind::SlowFast)
    for (std::size_t i = 0; i < specs.size(); ++i) expected += stage_line("fast", i, specs[i]);
  std::string found;
  for (const auto& l : stage_lines) found += l + "\n";
  if (found != expected) throw ValidationError("checkpoint: stage list disagrees with config");

  const auto& entries = ckpt.network.params().entries();
  if (count != entries.size())
    throw ValidationError("checkpoint: " + std::to_string(count) + " tensors, network has " +
                          std::to_string(entries.size()));
  for (std::size_t n = 0; n < count; ++n) {
    std::istringstream hdr(in.line());
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(hdr >> name >> rows >> cols)) throw ParseError("checkpoint: malformed tensor header");
    const Var* target = ckpt.network.params().find(name);
    if (!target) throw ValidationError("checkpoint: unknown tensor " + name);
    Var v = *target;
    Tensor& value = v.mutable_value();
    if (value.rows() != rows || value.cols() != cols)
      throw ValidationError("checkpoint: tensor " + name + " has shape " + std::to_string(rows) +
                            "x" + std::to_string(cols) + ", expected " + value.shape_string());
    const char* p = in.take(rows * cols * 8);
    for (std::size_t i = 0; i < rows * cols; ++i) value.data()[i] = read_f64(p + 8 * i);
    if (*in.take(1) != '\n') throw ParseError("checkpoint: tensor " + name + " not terminated");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const SfTmnNetwork& network,
                     const ClassMapping& mapping) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(network, mapping);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace sftmn
