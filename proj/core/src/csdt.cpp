#include "csda/csdt.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace csda {

namespace {

// On-disk integers are little-endian; this code assumes a little-endian
// host (checked at build time for the platforms we target).
static_assert(sizeof(float) == 4);

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("CSDT: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_csdt(std::ostream& os, const Tensor& t) {
  os.write("CSDT", 4);
  const char version = 1;
  os.write(&version, 1);
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (int d : t.dims) put_u32(os, static_cast<std::uint32_t>(d));
  std::vector<float> payload(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    payload[i] = static_cast<float>(t.data[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * 4));
  if (!os) throw std::runtime_error("CSDT: write failed");
}

Tensor read_csdt(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CSDT", 4) != 0)
    throw std::runtime_error("CSDT: bad magic");
  char version = 0;
  is.read(&version, 1);
  if (!is || version != 1)
    throw std::runtime_error("CSDT: unsupported version " + std::to_string(version));
  const std::uint32_t rank = get_u32(is);
  if (rank < 1 || rank > 4)
    throw std::runtime_error("CSDT: bad rank " + std::to_string(rank));
  Shape dims(rank);
  for (std::uint32_t i = 0; i < rank; ++i)
    dims[i] = static_cast<int>(get_u32(is));
  std::vector<float> payload(shape_numel(dims));
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * 4));
  if (!is) throw std::runtime_error("CSDT: truncated payload");
  std::vector<double> data(payload.begin(), payload.end());
  return Tensor(std::move(dims), std::move(data));
}

void save_csdt(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("CSDT: cannot open for write: " + path);
  write_csdt(os, t);
}

Tensor load_csdt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("CSDT: cannot open for read: " + path);
  return read_csdt(is);
}

}  // namespace csda
