#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "qnn/kernels.hpp"
#include "qnn/stn1.hpp"

namespace qnn {

/// One stored segment of a row: columns [start, start + length).
struct Run {
  std::uint32_t row = 0;
  std::uint32_t start = 0;
  std::uint32_t length = 0;
  bool operator==(const Run&) const = default;
};

/// Compressed-row matrix whose non-zero segments are stored as runs on an A-column grid:
/// every run starts on a multiple of A and its length is a multiple of A. Zeros inside a run
/// are stored and multiplied. When A does not divide `cols`, a trailing run may reach past
/// `cols`; the product reads zeros there.
template <Element T>
class SparsePackedMatrix {
 public:
  SparsePackedMatrix() = default;

  SparsePackedMatrix(int rows, int cols, int alignment, std::vector<Run> runs, std::vector<T> values, int q)
      : rows_(rows), cols_(cols), alignment_(alignment), q_(q), runs_(std::move(runs)), values_(std::move(values)) {
    check(rows > 0 && cols > 0, ErrorKind::ShapeMismatch, "sparse matrix needs positive extents");
    check(alignment == 8 || alignment == 16, ErrorKind::InvalidArgument, "alignment must be 8 or 16");
    std::size_t total = 0;
    row_begin_.assign(static_cast<std::size_t>(rows) + 1, 0);
    std::uint32_t prev_row = 0;
    std::uint32_t prev_end = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      const Run& r = runs_[i];
      check(r.row < static_cast<std::uint32_t>(rows), ErrorKind::InvalidNode, "run row out of range");
      check(r.length > 0 && r.length % static_cast<std::uint32_t>(alignment) == 0 &&
                r.start % static_cast<std::uint32_t>(alignment) == 0,
            ErrorKind::InvalidNode, "run is not aligned");
      check(r.start < static_cast<std::uint32_t>(padded_cols()) && r.start + r.length <= static_cast<std::uint32_t>(padded_cols()),
            ErrorKind::InvalidNode, "run exceeds the padded column range");
      if (i > 0) {
        check(r.row > prev_row || (r.row == prev_row && r.start >= prev_end), ErrorKind::InvalidNode,
              "runs must be ascending and disjoint");
      }
      prev_row = r.row;
      prev_end = r.start + r.length;
      row_begin_[r.row + 1] = static_cast<std::uint32_t>(i + 1);
      total += r.length;
    }
    for (std::size_t r = 1; r < row_begin_.size(); ++r) row_begin_[r] = std::max(row_begin_[r], row_begin_[r - 1]);
    check(total == values_.size(), ErrorKind::InvalidNode,
          "run lengths sum to " + std::to_string(total) + " but " + std::to_string(values_.size()) + " values stored");
    value_offset_.resize(runs_.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      value_offset_[i] = off;
      off += runs_[i].length;
    }
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int alignment() const noexcept { return alignment_; }
  int padded_cols() const noexcept { return (cols_ + alignment_ - 1) / alignment_ * alignment_; }
  int quantizer() const noexcept { return q_; }
  const std::vector<Run>& runs() const noexcept { return runs_; }
  const std::vector<T>& values() const noexcept { return values_; }

  /// Runs of row r as index range into runs().
  std::pair<std::size_t, std::size_t> row_runs(int r) const {
    return {row_begin_[static_cast<std::size_t>(r)], row_begin_[static_cast<std::size_t>(r) + 1]};
  }
  std::size_t value_offset(std::size_t run) const { return value_offset_[run]; }

  bool operator==(const SparsePackedMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && alignment_ == o.alignment_ && q_ == o.q_ && runs_ == o.runs_ &&
           values_ == o.values_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int alignment_ = 8;
  int q_ = 0;
  std::vector<Run> runs_;
  std::vector<T> values_;
  std::vector<std::uint32_t> row_begin_;
  std::vector<std::size_t> value_offset_;
};

/// Packs a dense [rows, cols] matrix. Each maximal non-zero segment is widened to the smallest
/// covering span on the alignment grid; overlapping or touching spans merge.
template <Element T>
SparsePackedMatrix<T> pack_sparse(const Tensor<T>& dense, int alignment = 8) {
  check(alignment == 8 || alignment == 16, ErrorKind::InvalidArgument, "alignment must be 8 or 16");
  detail::require_rank(dense.dims(), 2, "pack_sparse");
  const int rows = dense.dim(0);
  const int cols = dense.dim(1);
  const auto A = static_cast<std::uint32_t>(alignment);
  std::vector<Run> runs;
  std::vector<T> values;
  for (int r = 0; r < rows; ++r) {
    const T* row = dense.data().data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    const std::size_t first_run = runs.size();
    for (int c = 0; c < cols;) {
      if (row[c] == T{}) {
        ++c;
        continue;
      }
      const int seg_begin = c;
      while (c < cols && row[c] != T{}) ++c;
      const std::uint32_t begin = static_cast<std::uint32_t>(seg_begin) / A * A;
      const std::uint32_t end = (static_cast<std::uint32_t>(c) + A - 1) / A * A;
      if (runs.size() > first_run && begin <= runs.back().start + runs.back().length) {
        runs.back().length = std::max(runs.back().length, end - runs.back().start);
      } else {
        runs.push_back({static_cast<std::uint32_t>(r), begin, end - begin});
      }
    }
    for (std::size_t i = first_run; i < runs.size(); ++i)
      for (std::uint32_t k = 0; k < runs[i].length; ++k) {
        const std::uint32_t col = runs[i].start + k;
        values.push_back(col < static_cast<std::uint32_t>(cols) ? row[col] : T{});
      }
  }
  return SparsePackedMatrix<T>(rows, cols, alignment, std::move(runs), std::move(values), dense.quantizer());
}

/// Inverse of pack_sparse: dense [rows, cols].
template <Element T>
Tensor<T> unpack(const SparsePackedMatrix<T>& m) {
  Tensor<T> dense({m.rows(), m.cols()}, m.quantizer());
  const auto& runs = m.runs();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::size_t off = m.value_offset(i);
    for (std::uint32_t k = 0; k < runs[i].length; ++k) {
      const std::uint32_t col = runs[i].start + k;
      if (col < static_cast<std::uint32_t>(m.cols()))
        dense[static_cast<std::size_t>(runs[i].row) * static_cast<std::size_t>(m.cols()) + col] = m.values()[off + k];
    }
  }
  return dense;
}

/// y = m * x per row of x, with x [..., cols] -> [..., rows]. Same quantizer rule as MatMul with
/// weights q1 = m.quantizer(); bit-identical to matmul(x, transpose(unpack(m))).
template <Element T>
void spmv(const SparsePackedMatrix<T>& m, const Tensor<T>& x, int internal_shift, Tensor<T>& out,
          OpStats* stats = nullptr) {
  check(x.rank() >= 1 && x.dims().back() == m.cols(), ErrorKind::ShapeMismatch,
        "sparse product: input " + to_string(x.dims()) + " vs " + std::to_string(m.cols()) + " columns");
  if constexpr (element_traits<T>::integer) {
    check(internal_shift >= 0, ErrorKind::QuantizerOrder, "negative internal shift");
    detail::require_quantizer_order(x.quantizer(), internal_shift, "SparseMatMul");
  }
  const std::size_t K = static_cast<std::size_t>(m.cols());
  const std::size_t N = static_cast<std::size_t>(m.rows());
  const std::size_t M = x.size() / K;
  Dims dims = x.dims();
  dims.back() = m.rows();
  out.resize(dims);

  std::vector<T> padded(static_cast<std::size_t>(m.padded_cols()), T{});
  std::vector<detail::exact_t<T>> acc(N);
  const auto& runs = m.runs();
  for (std::size_t b = 0; b < M; ++b) {
    std::copy_n(x.data().data() + b * K, K, padded.begin());
    for (std::size_t r = 0; r < N; ++r) {
      detail::exact_t<T> sum{};
      const auto [lo, hi] = m.row_runs(static_cast<int>(r));
      for (std::size_t i = lo; i < hi; ++i) {
        const T* w = m.values().data() + m.value_offset(i);
        const T* xs = padded.data() + runs[i].start;
        if constexpr (std::is_same_v<T, std::int16_t>) {
          sum += simd::dot(w, xs, runs[i].length);
        } else {
          for (std::uint32_t k = 0; k < runs[i].length; ++k) sum += static_cast<detail::exact_t<T>>(w[k]) * xs[k];
        }
        if (stats) stats->macs += runs[i].length;
      }
      acc[r] = sum;
    }
    detail::finish_accumulators<T>(acc, m.quantizer() + internal_shift, out.data().subspan(b * N, N), "SparseMatMul");
  }
  if constexpr (element_traits<T>::integer) out.set_quantizer(x.quantizer() - internal_shift);
}

template <Element T>
Tensor<T> spmv(const SparsePackedMatrix<T>& m, const Tensor<T>& x, int internal_shift = 0) {
  Tensor<T> out;
  spmv(m, x, internal_shift, out);
  return out;
}

/// Multiplies executed by spmv for one input row: the sum of stored run lengths.
template <Element T>
std::uint64_t sparse_mac_count(const SparsePackedMatrix<T>& m) {
  std::uint64_t macs = 0;
  for (const auto& r : m.runs()) macs += r.length;
  return macs;
}

/// Exact ratio sparse MACs / dense MACs as numerator and denominator.
struct Density {
  std::uint64_t sparse_macs = 0;
  std::uint64_t dense_macs = 0;
  double value() const { return dense_macs == 0 ? 0.0 : static_cast<double>(sparse_macs) / static_cast<double>(dense_macs); }
};

template <Element T>
Density density(const SparsePackedMatrix<T>& m) {
  return {sparse_mac_count(m), static_cast<std::uint64_t>(m.rows()) * static_cast<std::uint64_t>(m.cols())};
}

using AnySparse = std::variant<SparsePackedMatrix<float>, SparsePackedMatrix<std::int32_t>,
                               SparsePackedMatrix<std::int16_t>, SparsePackedMatrix<std::int8_t>>;

// Payload: rows u32 | cols u32 | A u8 | run count u32 | runs (row, start, len) u32 | values as STN1.
template <Element T>
void write_sparse(io::ByteWriter& w, const SparsePackedMatrix<T>& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.u8(static_cast<std::uint8_t>(m.alignment()));
  w.u32(static_cast<std::uint32_t>(m.runs().size()));
  for (const auto& r : m.runs()) {
    w.u32(r.row);
    w.u32(r.start);
    w.u32(r.length);
  }
  const int n = static_cast<int>(m.values().size());
  if (n == 0) {
    // An all-zero matrix stores a single zero so the values blob stays a valid tensor.
    write_stn1(w, Tensor<T>({1}, std::vector<T>{T{}}, m.quantizer()));
  } else {
    write_stn1(w, Tensor<T>({n}, m.values(), m.quantizer()));
  }
}

inline AnySparse read_sparse(io::ByteReader& r) {
  const std::size_t start = r.offset();
  const auto rows = r.u32();
  const auto cols = r.u32();
  const int alignment = r.u8();
  const auto count = r.u32();
  check(count <= r.remaining() / 12, ErrorKind::Truncated, "run table at offset " + std::to_string(start) + " is cut short");
  std::vector<Run> runs(count);
  for (auto& run : runs) {
    run.row = r.u32();
    run.start = r.u32();
    run.length = r.u32();
  }
  AnyTensor blob = read_stn1(r);
  check(rows > 0 && rows <= 0x7fffffffu && cols > 0 && cols <= 0x7fffffffu, ErrorKind::InvalidNode,
        "bad sparse extents at offset " + std::to_string(start));
  return std::visit(
      [&](auto& t) -> AnySparse {
        using V = typename std::decay_t<decltype(t)>::value_type;
        std::vector<V> values(t.data().begin(), t.data().end());
        if (runs.empty()) values.clear();
        return SparsePackedMatrix<V>(static_cast<int>(rows), static_cast<int>(cols), alignment, std::move(runs),
                                     std::move(values), t.quantizer());
      },
      blob);
}

}  // namespace qnn
