#include "hiergen/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace hiergen {

namespace {

constexpr char kMagic[4] = {'H', 'G', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 4);
}

void write_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is, const std::string& path) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, 4);
  for (const auto& [name, t] : params.items()) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(f, static_cast<std::uint32_t>(d));
    for (double x : t.data()) write_f64(f, x);
  }
  if (!f) throw std::runtime_error("write failed for checkpoint " + path);
}

void load_checkpoint(ModelParams& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint " + path + ": bad magic header");
  }
  std::size_t loaded = 0;
  while (true) {
    f.peek();
    if (f.eof()) break;
    const std::uint32_t name_len = read_u32(f, path);
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len)) {
      throw std::runtime_error("checkpoint " + path + ": truncated name");
    }
    const std::uint32_t rank = read_u32(f, path);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<int>(read_u32(f, path)));
      numel *= static_cast<std::size_t>(shape.back());
    }
    if (!params.has(name)) {
      throw std::runtime_error("checkpoint " + path + ": unknown parameter '" + name + "'");
    }
    Tensor& t = params.get(name);
    if (t.shape() != shape) {
      throw std::runtime_error("checkpoint " + path + ": parameter '" + name + "' is " +
                               shape_str(shape) + " but the model needs " + shape_str(t.shape()));
    }
    for (std::size_t i = 0; i < numel; ++i) t.data()[i] = read_f64(f, path);
    ++loaded;
  }
  if (loaded != params.items().size()) {
    throw std::runtime_error("checkpoint " + path + ": has " + std::to_string(loaded) +
                             " entries, model has " + std::to_string(params.items().size()));
  }
}

}  // namespace hiergen
