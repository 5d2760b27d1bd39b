#include <fstream>
#include <sstream>

#include "binary_io.h"
#include "ctcam/nnet.h"
#include "json.hpp"

namespace ctcam {
namespace {

constexpr std::string_view kCheckpointMagic = "CTCM1";
constexpr int kFormatVersion = 1;

using nlohmann::json;

json Describe(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  json d;
  d["format"] = kFormatVersion;
  d["input_dim"] = p.input_dim;
  d["layers"] = json::array();
  for (const auto& layer : p.layers) {
    json l;
    l["cells"] = layer.spec.cells;
    l["direction"] =
        layer.spec.direction == Direction::kBidirectional ? "bidirectional" : "forward";
    l["projection"] = layer.spec.projection ? json(*layer.spec.projection) : json(nullptr);
    d["layers"].push_back(l);
  }
  d["labels"] = p.inventory.names();
  d["blank_id"] = p.inventory.blank_id() ? json(*p.inventory.blank_id()) : json(nullptr);
  d["kind"] = LabelKindName(p.inventory.kind());
  d["stack"] = {{"stack", ckpt.stack.stack},
                {"skip", ckpt.stack.skip},
                {"padding", ckpt.stack.padding == EdgePadding::kZero ? "zero" : "replicate"}};
  d["normalizer_dim"] = ckpt.normalizer.mean.size();
  d["step"] = ckpt.step;
  d["version"] = p.version;
  return d;
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string descriptor = Describe(ckpt).dump();
  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(descriptor.size()));
  os.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
  ckpt.params.ForEachTensor([&os](std::span<const double> t) {
    for (double v : t) io::WritePod<float>(os, static_cast<float>(v));
  });
  const auto& norm = ckpt.normalizer;
  for (Eigen::Index i = 0; i < norm.mean.size(); ++i) io::WritePod<double>(os, norm.mean[i]);
  for (Eigen::Index i = 0; i < norm.mean.size(); ++i) {
    io::WritePod<double>(os, norm.inv_stddev[i]);
  }
  io::AtomicWrite(path, os.str());
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) ThrowData("cannot open checkpoint " + path);
  io::ExpectMagic(is, kCheckpointMagic);
  const auto desc_len = io::ReadPod<uint32_t>(is, "descriptor length");
  std::string text(desc_len, '\0');
  if (!is.read(text.data(), desc_len)) ThrowData("truncated checkpoint descriptor");

  Checkpoint ckpt;
  try {
    const json d = json::parse(text);
    if (d.at("format").get<int>() != kFormatVersion) {
      ThrowData("unsupported checkpoint format in " + path);
    }
    std::vector<LayerSpec> arch;
    for (const auto& l : d.at("layers")) {
      LayerSpec spec;
      spec.cells = l.at("cells").get<int>();
      spec.direction = l.at("direction").get<std::string>() == "bidirectional"
                           ? Direction::kBidirectional
                           : Direction::kForward;
      if (!l.at("projection").is_null()) spec.projection = l.at("projection").get<int>();
      arch.push_back(spec);
    }
    std::optional<int> blank;
    if (!d.at("blank_id").is_null()) blank = d.at("blank_id").get<int>();
    LabelInventory inv(d.at("labels").get<std::vector<std::string>>(), blank,
                       ParseLabelKind(d.at("kind").get<std::string>()));
    ckpt.params = InitParams(arch, d.at("input_dim").get<int>(), inv, 0);
    ckpt.params.version = d.at("version").get<uint64_t>();
    const auto& st = d.at("stack");
    ckpt.stack.stack = st.at("stack").get<int>();
    ckpt.stack.skip = st.at("skip").get<int>();
    ckpt.stack.padding = st.at("padding").get<std::string>() == "zero"
                             ? EdgePadding::kZero
                             : EdgePadding::kReplicateLast;
    ckpt.step = d.at("step").get<int64_t>();
    const auto norm_dim = d.at("normalizer_dim").get<Eigen::Index>();
    if (norm_dim > 0) {
      ckpt.normalizer.mean.resize(norm_dim);
      ckpt.normalizer.inv_stddev.resize(norm_dim);
    }
  } catch (const json::exception& e) {
    ThrowData("malformed checkpoint descriptor in " + path + ": " + e.what());
  }

  ckpt.params.ForEachTensor([&is](std::span<double> t) {
    for (double& v : t) {
      v = io::ReadPod<float>(is, "parameter");
      if (!std::isfinite(v)) ThrowData("non-finite parameter in checkpoint");
    }
  });
  auto& norm = ckpt.normalizer;
  for (Eigen::Index i = 0; i < norm.mean.size(); ++i) {
    norm.mean[i] = io::ReadPod<double>(is, "normaliser");
  }
  for (Eigen::Index i = 0; i < norm.mean.size(); ++i) {
    norm.inv_stddev[i] = io::ReadPod<double>(is, "normaliser");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    ThrowData("trailing bytes in checkpoint " + path);
  }
  return ckpt;
}

}  // namespace ctcam
