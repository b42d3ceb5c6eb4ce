#pragma once

// Text formats.
//
// Sparse:  "dims: I1 ... IN" header, then one "i1 ... iN value" line per
//          entry, 1-based indices. '#' starts a comment. Duplicate indices
//          are summed (with a warning).
// Dense:   "dims: I1 ... IN" header, then prod(I) values in first-index-
//          fastest order, separated by any whitespace.
// CSV:     matrices as one row per line, comma separated, no header.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "symgcp/tensor.hpp"

namespace symgcp::io {

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

/// Reads up to and including the "dims:" header; returns its dims.
inline Dims read_header(std::istream& is, std::size_t& lineno) {
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    line = strip_comment(line);
    if (blank(line)) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "dims:") throw IoError("expected 'dims:' header", lineno);
    Dims dims;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(tok, &used);
      } catch (const std::logic_error&) {
        throw IoError("bad dimension '" + tok + "'", lineno);
      }
      if (used != tok.size() || v == 0 || tok[0] == '-')
        throw IoError("bad dimension '" + tok + "'", lineno);
      dims.push_back(static_cast<Index>(v));
    }
    if (dims.empty()) throw IoError("'dims:' header lists no dimensions", lineno);
    return dims;
  }
  throw IoError("missing 'dims:' header");
}

inline double parse_double(const std::string& tok, std::size_t lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::logic_error&) {
    throw IoError("bad number '" + tok + "'", lineno);
  }
  if (used != tok.size()) throw IoError("bad number '" + tok + "'", lineno);
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  return is;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  return os;
}

}  // namespace detail

inline SparseTensor read_sparse(std::istream& is) {
  std::size_t lineno = 0;
  const Dims dims = detail::read_header(is, lineno);
  const Index N = dims.size();
  std::vector<MultiIndex> subs;
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (detail::blank(line)) continue;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (toks.size() != N + 1)
      throw IoError("expected " + std::to_string(N) + " indices and a value, got " +
                        std::to_string(toks.size()) + " fields",
                    lineno);
    MultiIndex idx(N);
    for (Index n = 0; n < N; ++n) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(toks[n], &used);
      } catch (const std::logic_error&) {
        throw IoError("bad index '" + toks[n] + "'", lineno);
      }
      if (used != toks[n].size()) throw IoError("bad index '" + toks[n] + "'", lineno);
      if (v < 1 || static_cast<unsigned long long>(v) > dims[n])
        throw IoError("index " + toks[n] + " out of range 1.." + std::to_string(dims[n]) +
                          " for mode " + std::to_string(n + 1),
                      lineno);
      idx[n] = static_cast<Index>(v - 1);
    }
    subs.push_back(std::move(idx));
    vals.push_back(detail::parse_double(toks[N], lineno));
  }
  Index merged = 0;
  SparseTensor t = SparseTensor::coalesce(dims, subs, vals, &merged);
  if (merged > 0) warn("summed " + std::to_string(merged) + " duplicate sparse entries");
  return t;
}

inline DenseTensor read_dense(std::istream& is) {
  std::size_t lineno = 0;
  Dims dims = detail::read_header(is, lineno);
  std::vector<double> vals;
  vals.reserve(numel(dims));
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(detail::strip_comment(line));
    std::string tok;
    while (ls >> tok) vals.push_back(detail::parse_double(tok, lineno));
  }
  if (vals.size() != numel(dims))
    throw IoError("dense tensor " + to_string(dims) + " needs " + std::to_string(numel(dims)) +
                  " values, file has " + std::to_string(vals.size()));
  return DenseTensor(std::move(dims), std::move(vals));
}

inline void write_sparse(std::ostream& os, const SparseTensor& t) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "dims:";
  for (Index d : t.dims()) os << ' ' << d;
  os << '\n';
  for (Index e = 0; e < t.nnz(); ++e) {
    for (Index i : t.subscript(e)) os << i + 1 << ' ';
    os << t.value(e) << '\n';
  }
}

inline void write_dense(std::ostream& os, const DenseTensor& t) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "dims:";
  for (Index d : t.dims()) os << ' ' << d;
  os << '\n';
  const Index I0 = t.dim(0);
  for (Index lin = 0; lin < t.size(); ++lin)
    os << t[lin] << ((lin + 1) % I0 == 0 ? '\n' : ' ');
}

inline SparseTensor read_sparse(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_sparse(is);
}
inline DenseTensor read_dense(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_dense(is);
}
inline void write_sparse(const std::filesystem::path& path, const SparseTensor& t) {
  auto os = detail::open_out(path);
  write_sparse(os, t);
}
inline void write_dense(const std::filesystem::path& path, const DenseTensor& t) {
  auto os = detail::open_out(path);
  write_dense(os, t);
}

enum class TensorFormat { sparse, dense };

inline TensorFormat parse_format(const std::string& s) {
  if (s == "sparse") return TensorFormat::sparse;
  if (s == "dense") return TensorFormat::dense;
  throw ValidationError("unknown tensor format '" + s + "' (expected sparse or dense)");
}

/// ".dns"/".dense" are dense, everything else sparse.
inline TensorFormat format_from_extension(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".dns" || ext == ".dense") ? TensorFormat::dense : TensorFormat::sparse;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_csv(std::ostream& os, const Matrix& m) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
}

inline Matrix read_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      const auto b = tok.find_first_not_of(" \t\r");
      const auto e = tok.find_last_not_of(" \t\r");
      if (b == std::string::npos) throw IoError("empty CSV field", lineno);
      row.push_back(detail::parse_double(tok.substr(b, e - b + 1), lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("CSV row has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(rows.front().size()),
                    lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty CSV matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline void write_csv(const std::filesystem::path& path, const Matrix& m) {
  auto os = detail::open_out(path);
  write_csv(os, m);
}

inline Matrix read_csv(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  try {
    return read_csv(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Weight vectors are stored as a one-column CSV.
inline void write_vector(const std::filesystem::path& path, const Vector& v) {
  write_csv(path, Matrix(v));
}

inline Vector read_vector(const std::filesystem::path& path) {
  Matrix m = read_csv(path);
  if (m.cols() != 1) throw IoError(path.string() + ": expected a single column");
  return m.col(0);
}

}  // namespace symgcp::io
