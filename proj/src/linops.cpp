#include "rbd/linops.hpp"

#include <cmath>
#include <utility>

namespace rbd {

namespace {

thread_local std::uint64_t tl_matvecs = 0;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fwht_inplace(std::span<double> v, bool normalized) {
  const std::size_t n = v.size();
  require(is_power_of_two(n), "fwht: length " + std::to_string(n) + " is not a power of two");
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
  if (normalized) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& e : v) e *= scale;
  }
}

Vector fwht(const Vector& v, bool normalized) {
  Vector out = v;
  fwht_inplace(std::span<double>(out.data(), static_cast<std::size_t>(out.size())), normalized);
  return out;
}

DenseOperator::DenseOperator(RowMatrix entries) : entries_(std::move(entries)) {
  require(entries_.rows() >= 1 && entries_.cols() >= 1, "dense operator must be at least 1x1");
  require(entries_.allFinite(), "dense operator has non-finite entries");
}

HadamardSignOperator::HadamardSignOperator(std::size_t block_dim,
                                           std::vector<std::vector<double>> signs,
                                           std::size_t input_dim, bool normalized)
    : block_dim_(block_dim), input_dim_(input_dim), normalized_(normalized), signs_(std::move(signs)) {
  require(is_power_of_two(block_dim_), "hadamard block dimension must be a power of two");
  require(!signs_.empty(), "hadamard operator needs at least one block");
  require(input_dim_ >= 1 && input_dim_ <= block_dim_, "hadamard input dimension out of range");
  for (const auto& s : signs_) {
    require(s.size() == block_dim_, "hadamard sign vector has wrong length");
    for (double e : s) require(e == 1.0 || e == -1.0, "hadamard sign entries must be +-1");
  }
}

HadamardSignOperator HadamardSignOperator::partial(std::size_t block_dim, std::size_t block_count,
                                                   std::size_t input_dim, bool normalized) {
  std::vector<std::vector<double>> signs(block_count, std::vector<double>(block_dim, 1.0));
  return HadamardSignOperator(block_dim, std::move(signs), input_dim, normalized);
}

std::size_t rows(const Side& side) {
  return std::visit([](const auto& s) { return s.rows(); }, side);
}

std::size_t cols(const Side& side) {
  return std::visit([](const auto& s) { return s.cols(); }, side);
}

bool is_dense(const Side& side) { return std::holds_alternative<DenseOperator>(side); }

Vector apply_forward(const Side& side, const Vector& v) {
  require(static_cast<std::size_t>(v.size()) == cols(side),
          "apply_forward: input length " + std::to_string(v.size()) + " != " +
              std::to_string(cols(side)));
  ++tl_matvecs;
  return std::visit(
      Overloaded{
          [&](const DenseOperator& d) -> Vector { return d.entries() * v; },
          [&](const HadamardSignOperator& h) -> Vector {
            const std::size_t d = h.block_dim();
            Vector out(static_cast<Eigen::Index>(h.rows()));
            for (std::size_t b = 0; b < h.block_count(); ++b) {
              double* blk = out.data() + b * d;
              const auto& s = h.signs()[b];
              for (std::size_t j = 0; j < d; ++j) blk[j] = j < h.input_dim() ? s[j] * v[j] : 0.0;
              fwht_inplace(std::span<double>(blk, d), h.normalized());
            }
            return out;
          },
      },
      side);
}

Vector apply_transpose(const Side& side, const Vector& u) {
  require(static_cast<std::size_t>(u.size()) == rows(side),
          "apply_transpose: input length " + std::to_string(u.size()) + " != " +
              std::to_string(rows(side)));
  ++tl_matvecs;
  return std::visit(
      Overloaded{
          [&](const DenseOperator& d) -> Vector { return d.entries().transpose() * u; },
          [&](const HadamardSignOperator& h) -> Vector {
            const std::size_t d = h.block_dim();
            Vector out = Vector::Zero(static_cast<Eigen::Index>(h.input_dim()));
            std::vector<double> buf(d);
            for (std::size_t b = 0; b < h.block_count(); ++b) {
              const double* blk = u.data() + b * d;
              std::copy(blk, blk + d, buf.begin());
              fwht_inplace(buf, h.normalized());
              const auto& s = h.signs()[b];
              for (std::size_t j = 0; j < h.input_dim(); ++j) out[j] += s[j] * buf[j];
            }
            return out;
          },
      },
      side);
}

RowMatrix to_dense(const Side& side) {
  if (const auto* d = std::get_if<DenseOperator>(&side)) return d->entries();
  const std::size_t m = rows(side);
  const std::size_t n = cols(side);
  RowMatrix out(m, n);
  const std::uint64_t before = tl_matvecs;
  for (std::size_t j = 0; j < n; ++j) out.col(j) = apply_forward(side, Vector::Unit(n, j));
  tl_matvecs = before;
  return out;
}

MeasurementOperator::MeasurementOperator(Side left, Side right)
    : left_(std::move(left)), right_(std::move(right)) {
  require(rows(left_) == rows(right_), "left and right sides must have the same row count");
}

Vector bilinear_forward(const MeasurementOperator& op, const Vector& w, const Vector& x) {
  return apply_forward(op.left(), w).cwiseProduct(apply_forward(op.right(), x));
}

RowMatrix LinearMap::dense() const {
  const std::size_t n = cols();
  RowMatrix out(rows(), n);
  for (std::size_t j = 0; j < n; ++j) out.col(j) = apply(Vector::Unit(n, j));
  return out;
}

Vector MatrixMap::apply(const Vector& z) const {
  require(z.size() == a_.cols(), "matrix map: input length mismatch");
  ++tl_matvecs;
  return a_ * z;
}

Vector MatrixMap::apply_transpose(const Vector& u) const {
  require(u.size() == a_.rows(), "matrix map: input length mismatch");
  ++tl_matvecs;
  return a_.transpose() * u;
}

std::uint64_t matvec_count() { return tl_matvecs; }
void reset_matvec_count() { tl_matvecs = 0; }

}  // namespace rbd
