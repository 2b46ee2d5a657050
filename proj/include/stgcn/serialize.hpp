#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stgcn/tensor.hpp"

// Binary tensor layout: u32 rank, u32 extents[rank], then product(extents)
// 32-bit IEEE floats. All fields little-endian.

namespace stgcn {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// Encoded size in bytes of `t`.
std::size_t serialized_size(const Tensor& t);

}  // namespace stgcn
