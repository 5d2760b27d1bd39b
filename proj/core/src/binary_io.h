#ifndef CTCAM_SRC_BINARY_IO_H_
#define CTCAM_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "ctcam/common.h"

namespace ctcam::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void WritePod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& is, std::string_view what) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    ThrowData("truncated file while reading " + std::string(what));
  }
  return value;
}

inline void ExpectMagic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) ||
      got != magic) {
    ThrowData("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

// Writes to path + ".tmp" and renames over the destination.
void AtomicWrite(const std::string& path, const std::string& bytes);

}  // namespace ctcam::io

#endif  // CTCAM_SRC_BINARY_IO_H_
