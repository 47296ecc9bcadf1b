#pragma once

// Checkpoint file, plain text, version 1:
//
//   dsample-checkpoint 1
//   meta <key> <value...>              (zero or more, value runs to end of line)
//   tensor <name> <rank> <d0> ... <dr-1>
//   <values, row-major, %.17g, whitespace separated>
//   ...
//   end
//
// 17 significant digits make the text round-trip bit-exact for f64.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsample/autodiff.hpp"

namespace dsample {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;

  const ad::Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw IoError("checkpoint: missing tensor '" + name + "'");
  }

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("checkpoint: missing meta key '" + key + "'");
    return it->second;
  }
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "dsample-checkpoint 1\n";
  for (const auto& [k, v] : ck.meta) os << "meta " << k << ' ' << v << '\n';
  char buf[40];
  for (const auto& [name, t] : ck.tensors) {
    os << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) os << ' ' << d;
    os << '\n';
    std::size_t col = 0;
    for (double v : t.values()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << (col ? " " : "") << buf;
      if (++col == 8) {
        os << '\n';
        col = 0;
      }
    }
    if (col) os << '\n';
  }
  os << "end\n";
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  write_checkpoint(os, ck);
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ck;
  std::string line;
  if (!std::getline(is, line) || line != "dsample-checkpoint 1")
    throw IoError("checkpoint: bad header (expected 'dsample-checkpoint 1')");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") return ck;
    if (tag == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ck.meta[key] = value;
    } else if (tag == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank)) throw IoError("checkpoint: malformed tensor line '" + line + "'");
      Shape shape(rank);
      for (auto& d : shape)
        if (!(ls >> d)) throw IoError("checkpoint: malformed shape for '" + name + "'");
      std::vector<double> data(ad::detail::numel(shape));
      for (auto& v : data)
        if (!(is >> v)) throw IoError("checkpoint: truncated values for '" + name + "'");
      ck.tensors.emplace_back(name, ad::Tensor::from_data(std::move(shape), std::move(data)));
    } else {
      throw IoError("checkpoint: unknown record '" + tag + "'");
    }
  }
  throw IoError("checkpoint: missing 'end' record");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace dsample
