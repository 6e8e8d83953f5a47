#ifndef CSDA_CSDT_HPP
#define CSDA_CSDT_HPP

#include <iosfwd>
#include <string>

#include "csda/tensor.hpp"

namespace csda {

// "CSDT" raw tensor container: magic `CSDT`, version byte 1, u32 rank,
// rank u32 extents, then a row-major little-endian float32 payload.
// Values are converted from the internal doubles; round-trips are
// bit-exact at 32-bit precision.

void write_csdt(std::ostream& os, const Tensor& t);
Tensor read_csdt(std::istream& is);

void save_csdt(const std::string& path, const Tensor& t);
Tensor load_csdt(const std::string& path);

}  // namespace csda

#endif  // CSDA_CSDT_HPP
