#include "rbd/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace rbd {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector gaussian_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

RowMatrix gaussian_matrix(std::size_t m, std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix a(m, d);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  return a;
}

Vector sphere_point(std::size_t n, double radius, Rng& rng) {
  Vector v;
  do {
    v = gaussian_vector(n, rng);
  } while (v.norm() == 0.0);
  return v * (radius / v.norm());
}

void check_pair(const ProblemInstance& inst, const SignalPair& p) {
  if (static_cast<std::size_t>(p.w.size()) != inst.d1() ||
      static_cast<std::size_t>(p.x.size()) != inst.d2())
    throw DimensionError("signal pair dimensions do not match the instance");
}

// Largest power of two dividing m.
std::size_t pow2_part(std::size_t m) { return m & (~m + 1); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

std::size_t ProblemInstance::outlier_count() const {
  return static_cast<std::size_t>(std::count(outlier_mask.begin(), outlier_mask.end(), true));
}

ProblemInstance generate_instance(const InstanceSpec& spec) {
  if (spec.d1 < 1 || spec.d2 < 1 || spec.m < 1) throw ConfigError("dimensions must be positive");
  if (!(spec.noise.p_fail >= 0.0 && spec.noise.p_fail < 0.5))
    throw ConfigError("p_fail must lie in [0, 1/2)");
  if (!(spec.magnitude > 0.0)) throw ConfigError("signal magnitude must be positive");
  if (!(spec.nu >= 1.0)) throw ConfigError("nu must be at least 1");

  Rng rng(derive_seed(spec.seed, {0x1157A4CEULL}));

  Side left = [&]() -> Side {
    if (spec.model == SensingModel::Gaussian) return DenseOperator(gaussian_matrix(spec.m, spec.d1, rng));
    const std::size_t block = pow2_part(spec.m);
    if (block < spec.d1)
      throw ConfigError("partial Hadamard needs m with a power-of-two factor >= d1 (m = " +
                        std::to_string(spec.m) + ", d1 = " + std::to_string(spec.d1) + ")");
    return HadamardSignOperator::partial(block, spec.m / block, spec.d1, false);
  }();
  Side right = DenseOperator(gaussian_matrix(spec.m, spec.d2, rng));
  MeasurementOperator op(std::move(left), std::move(right));

  const double scale = std::sqrt(spec.magnitude);
  GroundTruth truth{sphere_point(spec.d1, scale, rng), sphere_point(spec.d2, scale, rng)};

  const auto outliers = static_cast<std::size_t>(std::llround(spec.noise.p_fail * spec.m));
  std::vector<std::size_t> idx(spec.m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < outliers; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, spec.m - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<bool> mask(spec.m, false);
  for (std::size_t i = 0; i < outliers; ++i) mask[idx[i]] = true;

  Vector y = bilinear_forward(op, truth.w_bar, truth.x_bar);
  if (outliers > 0) {
    if (const auto* g = std::get_if<IndependentGaussian>(&spec.noise.kind)) {
      if (!(g->sigma > 0.0)) throw ConfigError("noise sigma must be positive");
      std::normal_distribution<double> noise(0.0, g->sigma);
      for (std::size_t i = 0; i < spec.m; ++i)
        if (mask[i]) y[i] = noise(rng);
    } else {
      const auto& imp = std::get<ImplantedSignal>(spec.noise.kind);
      Vector w_imp = imp.w_imp.size() ? imp.w_imp : sphere_point(spec.d1, scale, rng);
      Vector x_imp = imp.x_imp.size() ? imp.x_imp : sphere_point(spec.d2, scale, rng);
      if (static_cast<std::size_t>(w_imp.size()) != spec.d1 ||
          static_cast<std::size_t>(x_imp.size()) != spec.d2)
        throw ConfigError("implanted signal dimensions do not match");
      const Vector hidden = bilinear_forward(op, w_imp, x_imp);
      for (std::size_t i = 0; i < spec.m; ++i)
        if (mask[i]) y[i] = hidden[i];
    }
  }
  return ProblemInstance{spec, std::move(op), std::move(y), std::move(truth), std::move(mask)};
}

ProblemInstance make_instance(MeasurementOperator op, Vector y, GroundTruth truth,
                              std::vector<bool> outlier_mask, double nu) {
  if (static_cast<std::size_t>(y.size()) != op.measurements() || outlier_mask.size() != op.measurements())
    throw DimensionError("observations and mask must have one entry per measurement");
  if (static_cast<std::size_t>(truth.w_bar.size()) != op.left_dim() ||
      static_cast<std::size_t>(truth.x_bar.size()) != op.right_dim())
    throw DimensionError("ground truth dimensions do not match the operator");
  InstanceSpec spec;
  spec.d1 = op.left_dim();
  spec.d2 = op.right_dim();
  spec.m = op.measurements();
  spec.nu = nu;
  spec.magnitude = truth.magnitude();
  return ProblemInstance{spec, std::move(op), std::move(y), std::move(truth), std::move(outlier_mask)};
}

Vector residual(const ProblemInstance& inst, const SignalPair& p) {
  check_pair(inst, p);
  return bilinear_forward(inst.op, p.w, p.x) - inst.y;
}

double objective(const ProblemInstance& inst, const SignalPair& p) {
  return residual(inst, p).lpNorm<1>() / static_cast<double>(inst.m());
}

Vector subgradient(const ProblemInstance& inst, const SignalPair& p) {
  check_pair(inst, p);
  const Vector lw = apply_forward(inst.op.left(), p.w);
  const Vector rx = apply_forward(inst.op.right(), p.x);
  const Vector s = (lw.cwiseProduct(rx) - inst.y).unaryExpr([](double r) {
    return static_cast<double>((r > 0.0) - (r < 0.0));
  });
  const double inv_m = 1.0 / static_cast<double>(inst.m());
  Vector g(static_cast<Eigen::Index>(inst.d1() + inst.d2()));
  g.head(inst.d1()) = apply_transpose(inst.op.left(), s.cwiseProduct(rx)) * inv_m;
  g.tail(inst.d2()) = apply_transpose(inst.op.right(), s.cwiseProduct(lw)) * inv_m;
  return g;
}

Vector concat(const SignalPair& p) {
  Vector z(p.w.size() + p.x.size());
  z << p.w, p.x;
  return z;
}

SignalPair split(const Vector& z, std::size_t d1) {
  if (static_cast<std::size_t>(z.size()) < d1) throw DimensionError("split: vector shorter than d1");
  return {z.head(d1), z.tail(z.size() - static_cast<Eigen::Index>(d1))};
}

LinearizedResidual::LinearizedResidual(const ProblemInstance& inst, const SignalPair& base)
    : op_(&inst.op), d1_(inst.d1()), d2_(inst.d2()) {
  check_pair(inst, base);
  lw_ = apply_forward(inst.op.left(), base.w);
  rx_ = apply_forward(inst.op.right(), base.x);
  offset_ = inst.y - lw_.cwiseProduct(rx_);
}

Vector LinearizedResidual::apply(const Vector& z) const {
  if (static_cast<std::size_t>(z.size()) != cols()) throw DimensionError("linearization: step has wrong length");
  return apply_forward(op_->left(), z.head(d1_)).cwiseProduct(rx_) +
         lw_.cwiseProduct(apply_forward(op_->right(), z.tail(d2_)));
}

Vector LinearizedResidual::apply_transpose(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != rows()) throw DimensionError("linearization: residual has wrong length");
  Vector out(static_cast<Eigen::Index>(cols()));
  out.head(d1_) = rbd::apply_transpose(op_->left(), rx_.cwiseProduct(u));
  out.tail(d2_) = rbd::apply_transpose(op_->right(), lw_.cwiseProduct(u));
  return out;
}

double LinearizedResidual::model_value(const Vector& z) const {
  return (apply(z) - offset_).lpNorm<1>() / static_cast<double>(rows());
}

RowMatrix LinearizedResidual::dense() const {
  RowMatrix a(rows(), cols());
  a.leftCols(d1_) = rx_.asDiagonal() * to_dense(op_->left());
  a.rightCols(d2_) = lw_.asDiagonal() * to_dense(op_->right());
  return a;
}

const char* to_string(SensingModel model) {
  return model == SensingModel::Gaussian ? "gaussian" : "hadamard";
}

std::optional<SensingModel> parse_sensing_model(const std::string& name) {
  if (name == "gaussian") return SensingModel::Gaussian;
  if (name == "hadamard") return SensingModel::PartialHadamardLeft;
  return std::nullopt;
}

namespace {

void write_vector(std::ostream& out, const char* key, const Vector& v) {
  out << key << '=';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  out << '\n';
}

Vector read_vector(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

void save_instance(const ProblemInstance& inst, std::ostream& out) {
  const auto& s = inst.spec;
  out << std::setprecision(17);
  out << "rbd-instance 1\n";
  out << "model=" << to_string(s.model) << '\n';
  out << "d1=" << s.d1 << "\nd2=" << s.d2 << "\nm=" << s.m << '\n';
  out << "seed=" << s.seed << '\n';
  out << "magnitude=" << s.magnitude << "\nnu=" << s.nu << '\n';
  out << "p_fail=" << s.noise.p_fail << '\n';
  if (const auto* g = std::get_if<IndependentGaussian>(&s.noise.kind)) {
    out << "noise=n1\nsigma=" << g->sigma << '\n';
  } else {
    const auto& imp = std::get<ImplantedSignal>(s.noise.kind);
    out << "noise=n2\n";
    if (imp.w_imp.size()) write_vector(out, "w_imp", imp.w_imp);
    if (imp.x_imp.size()) write_vector(out, "x_imp", imp.x_imp);
  }
  out << "mask=";
  for (bool b : inst.outlier_mask) out << (b ? '1' : '0');
  out << '\n';
  write_vector(out, "y", inst.y);
}

ProblemInstance load_instance(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "rbd-instance 1") throw ConfigError("not an rbd instance dump");
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed instance line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("instance dump is missing '" + key + "'");
    return it->second;
  };
  InstanceSpec spec;
  auto model = parse_sensing_model(get("model"));
  if (!model) throw ConfigError("unknown sensing model '" + get("model") + "'");
  spec.model = *model;
  spec.d1 = std::stoull(get("d1"));
  spec.d2 = std::stoull(get("d2"));
  spec.m = std::stoull(get("m"));
  spec.seed = std::stoull(get("seed"));
  spec.magnitude = std::stod(get("magnitude"));
  spec.nu = std::stod(get("nu"));
  spec.noise.p_fail = std::stod(get("p_fail"));
  if (get("noise") == "n1") {
    spec.noise.kind = IndependentGaussian{std::stod(get("sigma"))};
  } else {
    ImplantedSignal imp;
    if (kv.count("w_imp")) imp.w_imp = read_vector(kv["w_imp"]);
    if (kv.count("x_imp")) imp.x_imp = read_vector(kv["x_imp"]);
    spec.noise.kind = imp;
  }
  ProblemInstance inst = generate_instance(spec);

  const std::string& mask = get("mask");
  const Vector y = read_vector(get("y"));
  bool same = mask.size() == inst.m() && static_cast<std::size_t>(y.size()) == inst.m();
  for (std::size_t i = 0; same && i < inst.m(); ++i)
    same = (mask[i] == '1') == inst.outlier_mask[i] && y[static_cast<Eigen::Index>(i)] == inst.y[static_cast<Eigen::Index>(i)];
  if (!same) throw ConfigError("instance dump does not reproduce from its parameters");
  return inst;
}

}  // namespace rbd
