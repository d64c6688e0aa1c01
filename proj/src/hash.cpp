#include "heatcorr/hash.hpp"

#include <fstream>
#include <vector>

#include "heatcorr/error.hpp"

namespace heatcorr {

ContentHash hash_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for hashing");
  std::vector<char> buf(1 << 16);
  ContentHash h = kFnvOffset;
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(is.gcount());
    h = fnv1a(std::as_bytes(std::span(buf.data(), got)), h);
  }
  return h;
}

}  // namespace heatcorr
