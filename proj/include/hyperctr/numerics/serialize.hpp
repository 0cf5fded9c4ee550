#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hyperctr/kv.hpp"
#include "hyperctr/numerics/matrix.hpp"

namespace hyperctr {

static_assert(std::endian::native == std::endian::little, "tensor files are written in native little-endian order");

// Named tensors plus flat metadata. On disk:
//   <magic> <version>\n
//   meta <key>=<value>\n        (sorted by key)
//   tensor <name> <rows> <cols>\n
//   end\n
//   raw little-endian doubles, tensors in header order, row-major
struct TensorFile {
  KeyValues meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
      if (n == name) return m;
    }
    throw IoError("tensor '" + name + "' missing from file");
  }
};

inline void write_tensor_file(const std::string& path, const std::string& magic, int version, const TensorFile& tf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << magic << ' ' << version << '\n';
  for (const auto& [k, v] : tf.meta) {
    if (k.find_first_of(" =\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("metadata entry '" + k + "' cannot be serialized");
    }
    out << "meta " << k << '=' << v << '\n';
  }
  for (const auto& [name, m] : tf.tensors) {
    if (name.find_first_of(" \n") != std::string::npos) throw ContractError("tensor name '" + name + "' contains whitespace");
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  }
  out << "end\n";
  for (const auto& [name, m] : tf.tensors) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path);
}

inline TensorFile read_tensor_file(const std::string& path, const std::string& magic, int version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != magic + ' ' + std::to_string(version)) {
    throw IoError(path + ": expected header '" + magic + ' ' + std::to_string(version) + "'");
  }
  TensorFile tf;
  std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError(path + ": malformed meta line");
      tf.meta[line.substr(5, eq - 5)] = line.substr(eq + 1);
    } else if (line.rfind("tensor ", 0) == 0) {
      const auto parts = split(line, ' ');
      Index rows = 0;
      Index cols = 0;
      if (parts.size() != 4 || !parse_number(parts[2], rows) || !parse_number(parts[3], cols) || rows < 0 || cols < 0) {
        throw IoError(path + ": malformed tensor line '" + line + "'");
      }
      shapes.push_back({parts[1], {rows, cols}});
    } else {
      throw IoError(path + ": unexpected header line '" + line + "'");
    }
  }
  if (!ended) throw IoError(path + ": truncated header");
  for (const auto& [name, shape] : shapes) {
    Matrix m(shape.first, shape.second);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw IoError(path + ": truncated data for tensor '" + name + "'");
    tf.tensors.emplace_back(name, std::move(m));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw IoError(path + ": trailing bytes after tensor data");
  return tf;
}

}  // namespace hyperctr
