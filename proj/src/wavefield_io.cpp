#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "pinball/error.hpp"
#include "pinball/wavefield.hpp"

namespace pinball {
namespace {

constexpr std::size_t kHeaderBytes = 64;
constexpr std::size_t kMaxCsvPoints = std::size_t{1} << 16;

template <class T>
void put_le(unsigned char* dst, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) dst[b] = static_cast<unsigned char>(bits >> (8 * b));
}

template <class T>
T get_le(const unsigned char* src) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(src[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_binary(const std::filesystem::path& path, const Wavefunction& psi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  unsigned char header[kHeaderBytes] = {};
  std::memcpy(header, "BPWF", 4);
  put_le<std::uint32_t>(header + 4, static_cast<std::uint32_t>(psi.grid.dims));
  put_le<std::uint64_t>(header + 8, psi.grid.n[0]);
  put_le<std::uint64_t>(header + 16, psi.grid.n[1]);
  put_le<double>(header + 24, psi.grid.length[0]);
  put_le<double>(header + 32, psi.grid.length[1]);
  put_le<double>(header + 40, psi.time);
  out.write(reinterpret_cast<const char*>(header), kHeaderBytes);

  std::vector<unsigned char> body(psi.amp.size() * 16);
  for (std::size_t i = 0; i < psi.amp.size(); ++i) {
    put_le<double>(body.data() + 16 * i, psi.amp[i].real());
    put_le<double>(body.data() + 16 * i + 8, psi.amp[i].imag());
  }
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Wavefunction read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  unsigned char header[kHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (!in || std::memcmp(header, "BPWF", 4) != 0)
    throw Error(ErrorKind::Io, "bad snapshot header in " + path.string());

  Grid g;
  g.dims = static_cast<int>(get_le<std::uint32_t>(header + 4));
  g.n = {get_le<std::uint64_t>(header + 8), get_le<std::uint64_t>(header + 16)};
  g.length = {get_le<double>(header + 24), get_le<double>(header + 32)};
  g.validate();

  Wavefunction psi{g, ComplexField(g.size()), get_le<double>(header + 40)};
  std::vector<unsigned char> body(g.size() * 16);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!in) throw Error(ErrorKind::Io, "truncated snapshot " + path.string());
  for (std::size_t i = 0; i < g.size(); ++i)
    psi.amp[i] = {get_le<double>(body.data() + 16 * i), get_le<double>(body.data() + 16 * i + 8)};
  return psi;
}

void write_csv(const std::filesystem::path& path, const Wavefunction& psi) {
  const Grid& g = psi.grid;
  if (g.size() > kMaxCsvPoints)
    throw Error(ErrorKind::InvalidArgument, "CSV export is limited to grids of at most 65536 points");
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17);
  out << (g.dims == 1 ? "x,re,im\n" : "x,y,re,im\n");
  for (std::size_t i = 0; i < g.n[0]; ++i)
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      const Complex a = psi.amp[g.index(i, j)];
      out << g.coord(0, i) << ',';
      if (g.dims == 2) out << g.coord(1, j) << ',';
      out << a.real() << ',' << a.imag() << '\n';
    }
}

}  // namespace pinball
