#include "deqsci/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'C', 'I'};
constexpr std::size_t kFixedHeader = 7;

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t> &out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(const std::uint8_t *p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

std::size_t dtype_size(Dtype d) { return d == Dtype::Float32 ? 4 : 8; }

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor &t) {
  if (t.dims.size() > 255) throw Error(ErrorKind::InvalidArgument, "tensor has more than 255 dimensions");
  if (t.element_count() != t.data.size()) {
    throw Error(ErrorKind::ShapeMismatch, "tensor dims product " + std::to_string(t.element_count()) +
                                              " != data length " + std::to_string(t.data.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 4 * t.dims.size() + dtype_size(t.dtype) * t.data.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint32_t>(out, d);
  if (t.dtype == Dtype::Float64) {
    for (double v : t.data) put<double>(out, v);
  } else {
    for (double v : t.data) put<float>(out, static_cast<float>(v));
  }
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, "missing VSCI magic");
  }
  if (bytes.size() < kFixedHeader) throw Error(ErrorKind::Truncated, "header shorter than 7 bytes");
  const std::uint8_t version = bytes[4];
  if (version != kTensorFileVersion) {
    throw Error(ErrorKind::BadMagic, "unsupported version " + std::to_string(version));
  }
  const std::uint8_t code = bytes[5];
  if (code > 1) throw Error(ErrorKind::DtypeMismatch, "unknown dtype code " + std::to_string(code));
  Tensor t;
  t.dtype = static_cast<Dtype>(code);
  const std::size_t ndim = bytes[6];
  const std::size_t header = kFixedHeader + 4 * ndim;
  if (bytes.size() < header) throw Error(ErrorKind::Truncated, "dims block truncated");
  t.dims.resize(ndim);
  for (std::size_t k = 0; k < ndim; ++k) t.dims[k] = get<std::uint32_t>(bytes.data() + kFixedHeader + 4 * k);
  const std::size_t count = t.element_count();
  const std::size_t expected = header + count * dtype_size(t.dtype);
  if (bytes.size() != expected) {
    throw Error(ErrorKind::Truncated, "payload is " + std::to_string(bytes.size() - header) + " bytes, dims require " +
                                          std::to_string(expected - header));
  }
  t.data.resize(count);
  const std::uint8_t *p = bytes.data() + header;
  if (t.dtype == Dtype::Float64) {
    for (std::size_t i = 0; i < count; ++i) t.data[i] = get<double>(p + 8 * i);
  } else {
    for (std::size_t i = 0; i < count; ++i) t.data[i] = get<float>(p + 4 * i);
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string &path, const std::vector<std::uint8_t> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to '" + path + "'");
}

void write_tensor(const std::string &path, const Tensor &t) { write_file_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const std::string &path) {
  try {
    return decode_tensor(read_file_bytes(path));
  } catch (const Error &e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), std::string(e.what()) + " in '" + path + "'");
  }
}

Tensor read_tensor(const std::string &path, Dtype expected) {
  Tensor t = read_tensor(path);
  if (t.dtype != expected) {
    throw Error(ErrorKind::DtypeMismatch, "'" + path + "' holds dtype " + std::to_string(static_cast<int>(t.dtype)) +
                                              ", expected " + std::to_string(static_cast<int>(expected)));
  }
  return t;
}

Tensor cube_to_tensor(const VideoCube &x, Dtype dtype) {
  return Tensor{{static_cast<std::uint32_t>(x.frames()), static_cast<std::uint32_t>(x.height()),
                 static_cast<std::uint32_t>(x.width())},
                x.data(),
                dtype};
}

VideoCube tensor_to_cube(const Tensor &t) {
  if (t.dims.size() != 3) {
    throw Error(ErrorKind::ShapeMismatch, "cube tensor needs 3 dims [B,H,W], got " + std::to_string(t.dims.size()));
  }
  return VideoCube(t.dims[1], t.dims[2], t.dims[0], t.data);
}

Tensor image_to_tensor(const Image &y, Dtype dtype) {
  return Tensor{{static_cast<std::uint32_t>(y.height), static_cast<std::uint32_t>(y.width)}, y.data, dtype};
}

Image tensor_to_image(const Tensor &t) {
  if (t.dims.size() != 2) {
    throw Error(ErrorKind::ShapeMismatch, "image tensor needs 2 dims [H,W], got " + std::to_string(t.dims.size()));
  }
  Image y(t.dims[0], t.dims[1]);
  y.data = t.data;
  return y;
}

}  // namespace deqsci
