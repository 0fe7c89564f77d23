#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asymm/errors.hpp"

namespace asymm {

// One data point: features in [0,1]^d plus optional {0,1} labels keyed by
// predicate name. labels feed the node's own soft loss; shared_labels feed
// the shared soft loss (unused by the built-in scenarios, kept for
// completeness of the objective decomposition).
struct data_sample {
  std::vector<double> x;
  std::map<std::string, double> labels;
  std::map<std::string, double> shared_labels;

  bool supervised() const { return !labels.empty(); }
};

struct dataset {
  int dim = 0;
  std::vector<data_sample> samples;

  int size() const { return static_cast<int>(samples.size()); }
  int supervised_count() const {
    int n = 0;
    for (const auto& s : samples) n += s.supervised() ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// CSV: header "f0,...,f{d-1},label"; an empty label field marks an
// unsupervised sample. The label column binds to one predicate name.
// ---------------------------------------------------------------------------

inline dataset load_dataset_csv(std::istream& in, const std::string& label_predicate) {
  dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw parse_error("dataset csv: missing header");
  int columns = 1;
  for (char c : line) columns += (c == ',') ? 1 : 0;
  ds.dim = columns - 1;
  if (ds.dim < 1) throw parse_error("dataset csv: no feature columns");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    data_sample s;
    s.x.reserve(ds.dim);
    for (int k = 0; k < ds.dim; ++k) {
      if (!std::getline(ls, field, ','))
        throw parse_error("dataset csv line " + std::to_string(lineno) + ": too few fields");
      s.x.push_back(std::stod(field));
    }
    if (!std::getline(ls, field)) field.clear();
    if (!field.empty()) s.labels[label_predicate] = std::stod(field);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline dataset load_dataset_csv(const std::string& path, const std::string& label_predicate) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open dataset file: " + path);
  return load_dataset_csv(in, label_predicate);
}

inline void save_dataset_csv(const dataset& ds, std::ostream& out,
                             const std::string& label_predicate) {
  for (int k = 0; k < ds.dim; ++k) out << "f" << k << ",";
  out << "label\n";
  char buf[64];
  for (const auto& s : ds.samples) {
    for (double v : s.x) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ",";
    }
    auto it = s.labels.find(label_predicate);
    if (it != s.labels.end()) out << (it->second != 0.0 ? "1" : "0");
    out << "\n";
  }
}

inline void save_dataset_csv(const dataset& ds, const std::string& path,
                             const std::string& label_predicate) {
  std::ofstream out(path);
  if (!out) throw error("cannot write dataset file: " + path);
  save_dataset_csv(ds, out, label_predicate);
}

// ---------------------------------------------------------------------------
// IDX (big-endian): magic 0x00000803 for images, 0x00000801 for labels.
// Pixels are row-major bytes, normalized to [0,1] on load.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw parse_error("idx: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace detail

inline std::vector<std::vector<double>> load_idx_images(std::istream& in) {
  if (detail::read_be32(in) != 0x00000803u) throw parse_error("idx: bad image magic");
  const std::uint32_t count = detail::read_be32(in);
  const std::uint32_t rows = detail::read_be32(in);
  const std::uint32_t cols = detail::read_be32(in);
  std::vector<std::vector<double>> images(count, std::vector<double>(rows * cols));
  std::vector<unsigned char> buf(rows * cols);
  for (auto& img : images) {
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!in) throw parse_error("idx: truncated image data");
    for (std::size_t k = 0; k < buf.size(); ++k) img[k] = buf[k] / 255.0;
  }
  return images;
}

inline std::vector<std::vector<double>> load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open idx file: " + path);
  return load_idx_images(in);
}

inline std::vector<int> load_idx_labels(std::istream& in) {
  if (detail::read_be32(in) != 0x00000801u) throw parse_error("idx: bad label magic");
  const std::uint32_t count = detail::read_be32(in);
  std::vector<int> labels(count);
  for (auto& l : labels) {
    char c;
    in.read(&c, 1);
    if (!in) throw parse_error("idx: truncated label data");
    l = static_cast<unsigned char>(c);
  }
  return labels;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open idx file: " + path);
  return load_idx_labels(in);
}

inline void save_idx_images(const std::vector<std::vector<double>>& images, int rows, int cols,
                            std::ostream& out) {
  detail::write_be32(out, 0x00000803u);
  detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
  detail::write_be32(out, static_cast<std::uint32_t>(rows));
  detail::write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images)
    for (double v : img) {
      const int q = static_cast<int>(v * 255.0 + 0.5);
      out.put(static_cast<char>(q < 0 ? 0 : (q > 255 ? 255 : q)));
    }
}

inline void save_idx_labels(const std::vector<int>& labels, std::ostream& out) {
  detail::write_be32(out, 0x00000801u);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.put(static_cast<char>(l));
}

}  // namespace asymm
