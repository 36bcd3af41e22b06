#include "dysk/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dysk {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'S', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("container: truncated u32");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("container: truncated f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_container(const std::string& path, const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kContainerVersion);
  for (const auto& a : arrays) {
    if (shape_size(a.shape) != a.data.size())
      throw std::invalid_argument("container: shape/data mismatch for " + a.name);
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (long i = 0; i < a.data.size(); ++i) put_f64(out, a.data[i]);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedArray> read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a DYSK container: " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kContainerVersion)
    throw std::runtime_error("unsupported container version " + std::to_string(version));
  std::vector<NamedArray> arrays;
  while (true) {
    in.peek();
    if (in.eof()) break;
    NamedArray a;
    const std::uint32_t name_len = get_u32(in);
    a.name.resize(name_len);
    in.read(a.name.data(), name_len);
    const std::uint32_t rank = get_u32(in);
    a.shape.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) a.shape[i] = static_cast<int>(get_u32(in));
    const long n = shape_size(a.shape);
    a.data.resize(n);
    for (long i = 0; i < n; ++i) a.data[i] = get_f64(in);
    if (!in) throw std::runtime_error("container: truncated record in " + path);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::vector<NamedArray> arrays;
  arrays.reserve(params.count());
  for (const auto& name : params.names()) {
    const Tensor& p = params.get(name);
    arrays.push_back({name, p.shape(), p.value()});
  }
  write_container(path, arrays);
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  auto arrays = read_container(path);
  if (arrays.size() != params.count())
    throw std::runtime_error("checkpoint " + path + " holds " + std::to_string(arrays.size()) +
                             " tensors, model expects " + std::to_string(params.count()));
  for (const auto& a : arrays) {
    if (!params.contains(a.name))
      throw std::runtime_error("checkpoint tensor " + a.name + " unknown to this model");
    Tensor& p = params.get(a.name);
    if (p.shape() != a.shape)
      throw std::runtime_error("checkpoint tensor " + a.name + " has shape " +
                               shape_str(a.shape) + ", model expects " + shape_str(p.shape()));
    p.value_mut() = a.data;
  }
}

}  // namespace dysk
