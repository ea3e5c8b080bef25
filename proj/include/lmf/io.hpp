#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lmf/errors.hpp"
#include "lmf/model.hpp"

namespace lmf {

// Binary model formats, little-endian throughout.
//
// Factor-set block ("LMFUSE01"):
//   magic[8], u32 scalar_bytes, u32 M, u64 r, u64 d_h,
//   M x u64 modal dims (d_m+1, appended-1 included),
//   per modality the factor entries row-major over (rank, modal dim, d_h),
//   then the d_h bias entries.
//
// Trained-model file ("LMFMDL01"):
//   magic[8], factor-set block, u32 encoder count, per encoder
//   u64 hidden/input dims + w1 row-major + b1, u64 output/hidden dims +
//   w2 row-major + b2, u32 head flag, then head dims + w row-major + b.

inline constexpr char kFactorMagic[9] = "LMFUSE01";
inline constexpr char kModelMagic[9] = "LMFMDL01";

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated model file");
  return v;
}

template <typename Scalar>
void write_matrix_rowmajor(std::ostream& out, const MatrixX<Scalar>& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) write_pod(out, m(i, j));
}

template <typename Scalar>
MatrixX<Scalar> read_matrix_rowmajor(std::istream& in, Index rows, Index cols) {
  MatrixX<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = read_pod<Scalar>(in);
  return m;
}

template <typename Scalar>
void write_vector(std::ostream& out, const VectorX<Scalar>& v) {
  for (Index i = 0; i < v.size(); ++i) write_pod(out, v[i]);
}

template <typename Scalar>
VectorX<Scalar> read_vector(std::istream& in, Index n) {
  VectorX<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v[i] = read_pod<Scalar>(in);
  return v;
}

}  // namespace detail

template <typename Scalar>
void write_factors(std::ostream& out, const FactorSet<Scalar>& f) {
  out.write(kFactorMagic, 8);
  detail::write_pod<std::uint32_t>(out, sizeof(Scalar));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.modalities()));
  detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(f.rank()));
  detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(f.output_dim()));
  for (int m = 0; m < f.modalities(); ++m)
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(f.modal_dim(m)));
  for (int m = 0; m < f.modalities(); ++m)
    for (Index i = 0; i < f.rank(); ++i)
      for (Index j = 0; j < f.modal_dim(m); ++j)
        for (Index k = 0; k < f.output_dim(); ++k) detail::write_pod(out, f.entry(m, i, j, k));
  detail::write_vector(out, f.bias());
}

template <typename Scalar>
FactorSet<Scalar> read_factors(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFactorMagic, 8) != 0)
    throw std::runtime_error("not a factor-set file (bad magic)");
  if (detail::read_pod<std::uint32_t>(in) != sizeof(Scalar))
    throw std::runtime_error("scalar width mismatch in factor-set file");
  const auto M = detail::read_pod<std::uint32_t>(in);
  const auto r = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
  const auto dh = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
  std::vector<Index> dims(M);
  for (auto& d : dims) d = static_cast<Index>(detail::read_pod<std::uint64_t>(in));

  std::vector<MatrixX<Scalar>> factors;
  factors.reserve(M);
  for (std::uint32_t m = 0; m < M; ++m) {
    MatrixX<Scalar> f(dims[m], r * dh);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < dims[m]; ++j)
        for (Index k = 0; k < dh; ++k) f(j, i * dh + k) = detail::read_pod<Scalar>(in);
    factors.push_back(std::move(f));
  }
  return FactorSet<Scalar>(std::move(factors), detail::read_vector<Scalar>(in, dh), r);
}

template <typename Scalar>
void save_factors(const std::string& path, const FactorSet<Scalar>& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_factors(out, f);
}

template <typename Scalar>
FactorSet<Scalar> load_factors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_factors<Scalar>(in);
}

template <typename Scalar>
void save_model(const std::string& path, const ModelParams<Scalar>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kModelMagic, 8);
  write_factors(out, model.fusion);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.encoders.size()));
  for (const auto& e : model.encoders) {
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(e.w1.rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(e.w1.cols()));
    detail::write_matrix_rowmajor(out, e.w1);
    detail::write_vector(out, e.b1);
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(e.w2.rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(e.w2.cols()));
    detail::write_matrix_rowmajor(out, e.w2);
    detail::write_vector(out, e.b2);
  }
  detail::write_pod<std::uint32_t>(out, model.head ? 1u : 0u);
  if (model.head) {
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(model.head->w.rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(model.head->w.cols()));
    detail::write_matrix_rowmajor(out, model.head->w);
    detail::write_vector(out, model.head->b);
  }
}

template <typename Scalar>
ModelParams<Scalar> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw std::runtime_error("not a model file (bad magic)");
  ModelParams<Scalar> model{read_factors<Scalar>(in), {}, {}};
  const auto enc_count = detail::read_pod<std::uint32_t>(in);
  for (std::uint32_t m = 0; m < enc_count; ++m) {
    const auto r1 = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    const auto c1 = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    MatrixX<Scalar> w1 = detail::read_matrix_rowmajor<Scalar>(in, r1, c1);
    VectorX<Scalar> b1 = detail::read_vector<Scalar>(in, r1);
    const auto r2 = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    const auto c2 = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    MatrixX<Scalar> w2 = detail::read_matrix_rowmajor<Scalar>(in, r2, c2);
    VectorX<Scalar> b2 = detail::read_vector<Scalar>(in, r2);
    model.encoders.push_back(EncoderParams<Scalar>{std::move(w1), std::move(b1), std::move(w2), std::move(b2)});
  }
  if (detail::read_pod<std::uint32_t>(in) != 0) {
    const auto hr = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    const auto hc = static_cast<Index>(detail::read_pod<std::uint64_t>(in));
    MatrixX<Scalar> w = detail::read_matrix_rowmajor<Scalar>(in, hr, hc);
    model.head = AffineHead<Scalar>{std::move(w), detail::read_vector<Scalar>(in, hr)};
  }
  return model;
}

}  // namespace lmf
