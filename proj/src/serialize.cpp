#include "stgcn/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "stgcn/errors.hpp"

namespace stgcn {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ValidationError("tensor blob truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw ValidationError("failed writing tensor blob");
}

Tensor read_tensor(std::istream& in) {
  const auto rank = get_u32(in);
  if (rank > Tensor::kMaxRank) throw ValidationError("tensor blob declares rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = get_u32(in);
    if (e == 0) throw ValidationError("tensor blob has a zero extent");
  }
  std::vector<float> data(shape_size(shape));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return read_tensor(in);
}

std::size_t serialized_size(const Tensor& t) { return 4 * (1 + t.rank() + t.size()); }

}  // namespace stgcn
