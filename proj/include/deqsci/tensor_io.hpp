#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deqsci/cube.hpp"

namespace deqsci {

enum class Dtype : std::uint8_t { Float32 = 0, Float64 = 1 };

/// In-memory form of a VSCI tensor file. Values are held in double
/// regardless of the on-disk dtype.
///
/// On-disk layout (all integers little-endian):
///   bytes 0..3  "VSCI"
///   byte  4     version (1)
///   byte  5     dtype code (0 = float32, 1 = float64)
///   byte  6     ndim
///   ndim x u32  dims
///   payload     row-major, product(dims) values of the dtype
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
  Dtype dtype = Dtype::Float64;

  std::size_t element_count() const;
};

inline constexpr std::uint8_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor &t);
Tensor decode_tensor(const std::vector<std::uint8_t> &bytes);

void write_tensor(const std::string &path, const Tensor &t);
Tensor read_tensor(const std::string &path);
/// Reads and checks the stored dtype, raising DtypeMismatch when it differs.
Tensor read_tensor(const std::string &path, Dtype expected);

/// Cubes are stored with dims [B, H, W] so the payload is the stacked frames.
Tensor cube_to_tensor(const VideoCube &x, Dtype dtype = Dtype::Float64);
VideoCube tensor_to_cube(const Tensor &t);
Tensor image_to_tensor(const Image &y, Dtype dtype = Dtype::Float64);
Image tensor_to_image(const Tensor &t);

std::vector<std::uint8_t> read_file_bytes(const std::string &path);
void write_file_bytes(const std::string &path, const std::vector<std::uint8_t> &bytes);

}  // namespace deqsci
