#include <filesystem>
#include <fstream>
#include <sstream>

#include "binary_io.h"
#include "ctcam/frontend.h"

namespace ctcam {

namespace io {

void AtomicWrite(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) ThrowData("cannot open " + tmp + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) ThrowData("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) ThrowData("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace io

namespace {
constexpr std::string_view kFeatureMagic = "CTCF1";
}  // namespace

void WriteFeatureFile(const std::string& path, const FeatureMatrix& feat) {
  std::ostringstream os(std::ios::binary);
  os.write(kFeatureMagic.data(), kFeatureMagic.size());
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(feat.frames()));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(feat.dim()));
  io::WritePod<float>(os, static_cast<float>(feat.frame_shift_ms));
  io::WritePod<float>(os, static_cast<float>(feat.window_ms));
  for (Eigen::Index t = 0; t < feat.frames(); ++t) {
    for (Eigen::Index d = 0; d < feat.dim(); ++d) {
      io::WritePod<float>(os, static_cast<float>(feat.data(t, d)));
    }
  }
  io::AtomicWrite(path, os.str());
}

FeatureMatrix ReadFeatureFile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) ThrowData("cannot open feature file " + path);
  io::ExpectMagic(is, kFeatureMagic);
  const auto frames = io::ReadPod<uint32_t>(is, "frame count");
  const auto dim = io::ReadPod<uint32_t>(is, "dimension");
  FeatureMatrix feat;
  feat.frame_shift_ms = io::ReadPod<float>(is, "frame shift");
  feat.window_ms = io::ReadPod<float>(is, "window");
  if (frames == 0 || dim == 0) ThrowData("feature file " + path + " is empty");
  feat.data.resize(frames, dim);
  for (uint32_t t = 0; t < frames; ++t) {
    for (uint32_t d = 0; d < dim; ++d) {
      const float v = io::ReadPod<float>(is, "feature value");
      if (!std::isfinite(v)) ThrowData("non-finite value in " + path);
      feat.data(t, d) = v;
    }
  }
  return feat;
}

Waveform ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) ThrowData("cannot open wav file " + path);
  io::ExpectMagic(is, "RIFF");
  io::ReadPod<uint32_t>(is, "riff size");
  io::ExpectMagic(is, "WAVE");

  Waveform wave;
  bool have_fmt = false;
  while (true) {
    char id[4];
    if (!is.read(id, 4)) ThrowData("wav file " + path + " has no data chunk");
    const auto size = io::ReadPod<uint32_t>(is, "chunk size");
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      const auto format = io::ReadPod<uint16_t>(is, "audio format");
      const auto channels = io::ReadPod<uint16_t>(is, "channels");
      wave.sample_rate_hz = static_cast<int>(io::ReadPod<uint32_t>(is, "rate"));
      io::ReadPod<uint32_t>(is, "byte rate");
      io::ReadPod<uint16_t>(is, "block align");
      const auto bits = io::ReadPod<uint16_t>(is, "bits per sample");
      if (format != 1 || channels != 1 || bits != 16) {
        ThrowData("unsupported wav (need 16-bit mono PCM): " + path);
      }
      is.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) ThrowData("wav data chunk before fmt chunk: " + path);
      wave.samples.resize(size / 2);
      if (!is.read(reinterpret_cast<char*>(wave.samples.data()),
                   static_cast<std::streamsize>(wave.samples.size() * 2))) {
        ThrowData("truncated wav data: " + path);
      }
      break;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (wave.samples.empty() || wave.sample_rate_hz <= 0) {
    ThrowData("empty wav file " + path);
  }
  return wave;
}

void WriteWav(const std::string& path, const Waveform& wave) {
  std::ostringstream os(std::ios::binary);
  const auto data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  os.write("RIFF", 4);
  io::WritePod<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::WritePod<uint32_t>(os, 16);
  io::WritePod<uint16_t>(os, 1);
  io::WritePod<uint16_t>(os, 1);
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(wave.sample_rate_hz));
  io::WritePod<uint32_t>(os, static_cast<uint32_t>(wave.sample_rate_hz) * 2);
  io::WritePod<uint16_t>(os, 2);
  io::WritePod<uint16_t>(os, 16);
  os.write("data", 4);
  io::WritePod<uint32_t>(os, data_bytes);
  os.write(reinterpret_cast<const char*>(wave.samples.data()), data_bytes);
  io::AtomicWrite(path, os.str());
}

}  // namespace ctcam
