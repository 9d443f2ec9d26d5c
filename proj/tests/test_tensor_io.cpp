#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "deqsci/error.hpp"
#include "deqsci/tensor_io.hpp"
#include "oracles.hpp"

using namespace deqsci;

namespace {

std::string temp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / ("deqsci_io_" + name)).string();
}

ErrorKind decode_error(const std::vector<std::uint8_t> &bytes) {
  try {
    (void)decode_tensor(bytes);
  } catch (const Error &e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("2x2 tensor round trip") {
  Tensor t{{2, 2}, {0.1, -2.5, 3.0, 1e-300}, Dtype::Float64};
  const std::string path = temp_path("2x2.vsci");
  write_tensor(path, t);
  const Tensor r = read_tensor(path);
  CHECK(r.dims == t.dims);
  CHECK(r.data == t.data);
  CHECK(r.dtype == Dtype::Float64);
  write_tensor(path + ".2", r);
  CHECK(read_file_bytes(path) == read_file_bytes(path + ".2"));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".2");
}

TEST_CASE("header layout is bit-exact") {
  const auto bytes = encode_tensor(Tensor{{3, 1}, {1.0, 2.0, 3.0}, Dtype::Float64});
  REQUIRE(bytes.size() == 7 + 8 + 24);
  CHECK(bytes[0] == 'V');
  CHECK(bytes[3] == 'I');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 2);
  CHECK(bytes[7] == 3);
  CHECK(bytes[8] == 0);
  CHECK(bytes[11] == 1);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 15, 8);
  CHECK(first == 1.0);
}

TEST_CASE("float32 payload") {
  const auto bytes = encode_tensor(Tensor{{2}, {0.5, 0.1}, Dtype::Float32});
  CHECK(bytes.size() == 7 + 4 + 8);
  const Tensor r = decode_tensor(bytes);
  CHECK(r.dtype == Dtype::Float32);
  CHECK(r.data[0] == 0.5);
  CHECK(r.data[1] == static_cast<double>(0.1f));
  CHECK(encode_tensor(r) == bytes);
}

TEST_CASE("errors: bad magic, truncation, dtype") {
  auto bytes = encode_tensor(Tensor{{2, 2}, {1, 2, 3, 4}, Dtype::Float64});
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(decode_error(bad) == ErrorKind::BadMagic);

  auto shortened = bytes;
  shortened.pop_back();
  CHECK(decode_error(shortened) == ErrorKind::Truncated);
  auto grown = bytes;
  grown.push_back(0);
  CHECK(decode_error(grown) == ErrorKind::Truncated);
  auto bigger_dims = bytes;
  bigger_dims[7] = 3;
  CHECK(decode_error(bigger_dims) == ErrorKind::Truncated);

  auto dtype = bytes;
  dtype[5] = 9;
  CHECK(decode_error(dtype) == ErrorKind::DtypeMismatch);

  const std::string path = temp_path("dtype.vsci");
  write_tensor(path, Tensor{{1}, {1.0}, Dtype::Float32});
  CHECK_THROWS_AS(read_tensor(path, Dtype::Float64), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_tensor(temp_path("does_not_exist.vsci")), Error);
}

TEST_CASE("cube and image conversion") {
  std::mt19937_64 rng(1);
  const VideoCube x = oracle::random_cube(3, 4, 2, rng);
  const Tensor t = cube_to_tensor(x);
  CHECK(t.dims == std::vector<std::uint32_t>{2, 3, 4});
  CHECK(t.data[4 * 1 + 2] == x(1, 2, 0));
  CHECK(t.data[12 + 0] == x(0, 0, 1));
  const VideoCube back = tensor_to_cube(t);
  CHECK(back.vec() == x.vec());
  CHECK(encode_tensor(cube_to_tensor(back)) == encode_tensor(t));

  const Image y = oracle::random_image(3, 5, rng);
  const Tensor ti = image_to_tensor(y);
  CHECK(ti.dims == std::vector<std::uint32_t>{3, 5});
  CHECK(tensor_to_image(ti).data == y.data);
  CHECK_THROWS_AS(tensor_to_cube(ti), Error);
}
