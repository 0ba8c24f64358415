// File formats: edge lists, MDGF feature matrices, CSV matrices and label files.
//
// Matrix file layout (little-endian):
//   bytes 0..3  "MDGF"
//   u32 rows, u32 cols
//   rows*cols f32, row-major
#pragma once

#include "mdgmix/graph.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace mdgmix::io {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

inline void put_f32(std::ostream& os, double v) {
  put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t get_u16(std::istream& is, const std::string& what) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw ValidationError("truncated " + what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  return out;
}

}  // namespace detail

inline constexpr char kMatrixMagic[4] = {'M', 'D', 'G', 'F'};

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os.write(kMatrixMagic, 4);
  detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put_f32(os, m(i, j));
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  auto out = detail::open_out(path, true);
  write_matrix(out, m);
}

inline Matrix read_matrix(std::istream& is, const std::string& name = "matrix") {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMatrixMagic, 4) != 0)
    throw ValidationError(name + ": bad magic (expected MDGF)");
  const auto rows = detail::get_u32(is, name + " header");
  const auto cols = detail::get_u32(is, name + " header");
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) {
      const float v = detail::get_f32(is, name + " payload");
      if (!std::isfinite(v)) throw ValidationError(name + ": non-finite entry at (" + std::to_string(i) + "," +
                                                   std::to_string(j) + ")");
      m(i, j) = v;
    }
  return m;
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  return read_matrix(in, path.string());
}

/// Comma-separated matrix, one row per line; blank lines and `#` comments skipped.
inline Matrix read_csv_matrix(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "not a number: '" + cell + "'");
      }
      if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
        throw ParseError(path.string(), lineno, "trailing characters in '" + cell + "'");
      if (!std::isfinite(v)) throw ParseError(path.string(), lineno, "non-finite value");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path.string(), lineno, "expected " + std::to_string(rows.front().size()) + " columns");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

/// Loads MDGF, or CSV when the extension is `.csv`.
inline Matrix load_features(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return read_csv_matrix(path);
  return read_matrix(path);
}

/// Edge list: one "u v" per line, 0-indexed; `#` starts a comment.
inline std::vector<Edge> read_edge_list(std::istream& in, const std::string& name) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a)) continue;
    if (!(ss >> b) || (ss >> extra)) throw ParseError(name, lineno, "expected exactly two node ids");
    auto parse_id = [&](const std::string& tok) -> NodeId {
      if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(name, lineno, "invalid node id '" + tok + "'");
      unsigned long long v = 0;
      try {
        v = std::stoull(tok);
      } catch (const std::exception&) {
        throw ParseError(name, lineno, "node id out of range '" + tok + "'");
      }
      if (v > 0xffffffffULL) throw ParseError(name, lineno, "node id out of range '" + tok + "'");
      return static_cast<NodeId>(v);
    };
    edges.emplace_back(parse_id(a), parse_id(b));
  }
  return edges;
}

inline std::vector<Edge> read_edge_list(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  return read_edge_list(in, path.string());
}

inline void write_edge_list(const std::filesystem::path& path, std::span<const Edge> edges) {
  auto out = detail::open_out(path, false);
  for (auto [u, v] : edges) out << u << ' ' << v << '\n';
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    long long v = 0;
    std::string extra;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!(ss >> v) || (ss >> extra) || v < 0 || v > 1'000'000)
      throw ParseError(path.string(), lineno, "expected one non-negative integer label");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

inline void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  auto out = detail::open_out(path, false);
  for (int l : labels) out << l << '\n';
}

/// Loads one domain. Node count is taken from the feature matrix rows.
inline DomainGraph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                              DomainId domain_id,
                              const std::optional<std::filesystem::path>& labels_path = std::nullopt) {
  auto edges = read_edge_list(edge_path);
  Matrix feats = load_features(feature_path);
  if (feats.rows() == 0) throw ValidationError(feature_path.string() + ": empty graph (no feature rows)");
  if (!feats.allFinite()) throw ValidationError(feature_path.string() + ": non-finite feature entries");
  NodeId max_id = 0;
  for (auto [u, v] : edges) max_id = std::max({max_id, u, v});
  if (!edges.empty() && static_cast<Eigen::Index>(max_id) >= feats.rows())
    throw DimensionError(edge_path.string() + ": node id " + std::to_string(max_id) + " >= feature rows " +
                         std::to_string(feats.rows()));
  std::optional<std::vector<int>> labels;
  if (labels_path) labels = read_labels(*labels_path);
  const auto n = static_cast<std::size_t>(feats.rows());
  return build_graph(domain_id, n, edges, std::move(feats), std::move(labels));
}

}  // namespace mdgmix::io
