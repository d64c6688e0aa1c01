#include "heatcorr/corrnet.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "heatcorr/binary_io.hpp"
#include "heatcorr/log.hpp"

namespace heatcorr {
namespace {

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

Matrix elu_derivative(const Matrix& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

// Runs the residual stack, recording what backward needs.
Matrix run_blocks(const NetworkParams& params, const Matrix& input, std::vector<Matrix>* inputs,
                  std::vector<Matrix>* pre) {
  if (input.cols() != params.dim()) {
    throw Error(ErrorCategory::validation, "descriptor dimension " + std::to_string(input.cols()) +
                                               " does not match network dimension " +
                                               std::to_string(params.dim()));
  }
  Matrix x = input;
  for (const auto& block : params.blocks) {
    Matrix z = x * block.w1.transpose();
    z.rowwise() += block.b1.transpose();
    if (inputs) inputs->push_back(x);
    x.noalias() += elu(z) * block.w2.transpose();
    x.rowwise() += block.b2.transpose();
    if (pre) pre->push_back(std::move(z));
  }
  return x;
}

void backprop_blocks(const NetworkParams& params, const std::vector<Matrix>& inputs, const std::vector<Matrix>& pre,
                     Matrix grad_out, NetworkParams& grads) {
  for (Index b = params.layer_count() - 1; b >= 0; --b) {
    const auto& block = params.blocks[static_cast<std::size_t>(b)];
    auto& g = grads.blocks[static_cast<std::size_t>(b)];
    const Matrix& z = pre[static_cast<std::size_t>(b)];
    const Matrix act = elu(z);
    g.w2.noalias() += grad_out.transpose() * act;
    g.b2 += grad_out.colwise().sum().transpose();
    const Matrix grad_z = (grad_out * block.w2).cwiseProduct(elu_derivative(z));
    g.w1.noalias() += grad_z.transpose() * inputs[static_cast<std::size_t>(b)];
    g.b1 += grad_z.colwise().sum().transpose();
    grad_out.noalias() += grad_z * block.w1;
  }
}

Matrix inverse_gram(const Matrix& f, double ridge) {
  if (ridge < 0.0) throw Error(ErrorCategory::usage, "ridge must be nonnegative");
  Matrix h = f * f.transpose();
  h.diagonal().array() += ridge;
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    std::ostringstream msg;
    msg << "functional map system F F^T + ridge I is numerically singular (ridge " << ridge
        << "); increase the ridge";
    throw Error(ErrorCategory::numeric, msg.str());
  }
  return llt.solve(Matrix::Identity(h.rows(), h.cols()));
}

// Q = raw^2 / column sum of squares; zero columns become uniform.
void normalize_columns(const Matrix& raw, SoftCorrespondence& out, Vector& col_sq) {
  col_sq = raw.colwise().squaredNorm().transpose();
  out.soft_map.resize(raw.rows(), raw.cols());
  out.pre_square.resize(raw.rows(), raw.cols());
  out.zero_columns = 0;
  const double uniform = 1.0 / static_cast<double>(raw.rows());
  for (Index j = 0; j < raw.cols(); ++j) {
    if (col_sq(j) > 0.0) {
      out.pre_square.col(j) = raw.col(j).cwiseAbs() / std::sqrt(col_sq(j));
    } else {
      out.pre_square.col(j).setConstant(std::sqrt(uniform));
      ++out.zero_columns;
    }
  }
  out.soft_map = out.pre_square.cwiseProduct(out.pre_square);
}

Matrix check_finite(const Matrix& m, const char* what, Index layer) {
  if (!m.allFinite()) {
    throw Error(ErrorCategory::numeric, std::string("non-finite gradient in ") + what + " of layer " +
                                            std::to_string(layer));
  }
  return m;
}

}  // namespace

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams out;
  out.seed = seed;
  out.blocks.reserve(blocks.size());
  for (const auto& b : blocks) {
    out.blocks.push_back({Matrix::Zero(b.w1.rows(), b.w1.cols()), Matrix::Zero(b.w2.rows(), b.w2.cols()),
                          Vector::Zero(b.b1.size()), Vector::Zero(b.b2.size())});
  }
  return out;
}

std::vector<Eigen::Map<Vector>> NetworkParams::tensors() {
  std::vector<Eigen::Map<Vector>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.w1.data(), b.w1.size());
    out.emplace_back(b.b1.data(), b.b1.size());
    out.emplace_back(b.w2.data(), b.w2.size());
    out.emplace_back(b.b2.data(), b.b2.size());
  }
  return out;
}

std::vector<Eigen::Map<const Vector>> NetworkParams::tensors() const {
  std::vector<Eigen::Map<const Vector>> out;
  for (const auto& b : blocks) {
    out.emplace_back(b.w1.data(), b.w1.size());
    out.emplace_back(b.b1.data(), b.b1.size());
    out.emplace_back(b.w2.data(), b.w2.size());
    out.emplace_back(b.b2.data(), b.b2.size());
  }
  return out;
}

Index NetworkParams::parameter_count() const {
  Index total = 0;
  for (const auto& t : tensors()) total += t.size();
  return total;
}

AdamState AdamState::fresh(const NetworkParams& params, double learning_rate) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.learning_rate = learning_rate;
  return s;
}

void ShapeBundle::check_consistent() const {
  const Index n = basis.n_vertices();
  const bool kernel_ok = supervisor.matrix.size() == 0 || (supervisor.matrix.rows() == n && supervisor.matrix.cols() == n);
  if (basis.mass.size() != n || descriptors.rows() != n || !kernel_ok ||
      (mesh.n_vertices() != 0 && mesh.n_vertices() != n)) {
    throw Error(ErrorCategory::validation, "shape bundle arrays disagree on the vertex count");
  }
}

NetworkParams init_params(Index dim, int layer_count, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCategory::usage, "network dimension must be >= 1");
  if (layer_count < 1) throw Error(ErrorCategory::usage, "layer count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(dim)));
  auto draw = [&] {
    Matrix w(dim, dim);
    for (Index c = 0; c < dim; ++c) {
      for (Index r = 0; r < dim; ++r) w(r, c) = normal(rng);
    }
    return w;
  };
  NetworkParams p;
  p.seed = seed;
  for (int l = 0; l < layer_count; ++l) {
    ResidualBlock b;
    b.w1 = draw();
    b.w2 = draw();
    b.b1 = Vector::Zero(dim);
    b.b2 = Vector::Zero(dim);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

Matrix forward_features(const NetworkParams& params, const Matrix& descriptors) {
  return run_blocks(params, descriptors, nullptr, nullptr);
}

Matrix solve_fmap(const Matrix& source_coeffs, const Matrix& target_coeffs, double ridge) {
  if (source_coeffs.rows() != target_coeffs.rows() || source_coeffs.cols() != target_coeffs.cols()) {
    throw Error(ErrorCategory::validation, "solve_fmap: coefficient shapes differ");
  }
  if (source_coeffs.cols() < source_coeffs.rows()) {
    log::debug("solve_fmap: descriptor dimension below basis size, system is underdetermined");
  }
  // C^T = H^{-1} F G^T with H symmetric.
  return (inverse_gram(source_coeffs, ridge) * (source_coeffs * target_coeffs.transpose())).transpose();
}

SoftCorrespondence soft_map(const Matrix& fmap, const SpectralBasis& source_basis, const SpectralBasis& target_basis,
                            const std::vector<Index>& source_subset, const std::vector<Index>& target_subset) {
  if (fmap.rows() != target_basis.size() || fmap.cols() != source_basis.size()) {
    throw Error(ErrorCategory::validation, "soft_map: functional map does not match basis sizes");
  }
  const Matrix psi = target_basis.eigenfunctions(target_subset, Eigen::all);
  const Matrix proj = (source_basis.eigenfunctions(source_subset, Eigen::all).transpose() *
                       source_basis.mass(source_subset).asDiagonal());
  SoftCorrespondence out;
  out.fmap = fmap;
  const Matrix raw = psi * fmap * proj;
  Vector col_sq;
  normalize_columns(raw, out, col_sq);
  return out;
}

SoftCorrespondence soft_map(const Matrix& fmap, const SpectralBasis& source_basis, const SpectralBasis& target_basis) {
  return soft_map(fmap, source_basis, target_basis, iota_indices(source_basis.n_vertices()),
                  iota_indices(target_basis.n_vertices()));
}

PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const Matrix& source_kernel, const Matrix& target_kernel, const LossConfig& config,
                         const std::vector<Index>& source_subset, const std::vector<Index>& target_subset) {
  source.check_consistent();
  target.check_consistent();
  if (source_kernel.rows() != source.n_vertices() || source_kernel.cols() != source.n_vertices() ||
      target_kernel.rows() != target.n_vertices() || target_kernel.cols() != target.n_vertices()) {
    throw Error(ErrorCategory::validation, "supervisor kernel size does not match the shape");
  }
  if (source_subset.empty() || target_subset.empty()) {
    throw Error(ErrorCategory::validation, "vertex subsets must be nonempty");
  }
  auto check_range = [](const std::vector<Index>& subset, Index n) {
    for (Index v : subset) {
      if (v < 0 || v >= n) throw Error(ErrorCategory::validation, "vertex subset index out of range");
    }
  };
  check_range(source_subset, source.n_vertices());
  check_range(target_subset, target.n_vertices());
  if (source.basis.size() != target.basis.size()) {
    throw Error(ErrorCategory::validation, "source and target bases differ in size");
  }
  PairForward fwd;
  fwd.src_basis = &source.basis;
  fwd.tgt_basis = &target.basis;
  fwd.src_features = run_blocks(params, source.descriptors.values, &fwd.src_inputs, &fwd.src_pre);
  // a self pair shares one set of activations for both sides
  fwd.shared_features = &source.descriptors.values == &target.descriptors.values;
  fwd.tgt_features = fwd.shared_features ? fwd.src_features
                                         : run_blocks(params, target.descriptors.values, &fwd.tgt_inputs, &fwd.tgt_pre);
  fwd.f = project(fwd.src_features, source.basis);
  fwd.g = project(fwd.tgt_features, target.basis);
  fwd.h_inv = inverse_gram(fwd.f, config.ridge);
  fwd.c = (fwd.h_inv * (fwd.f * fwd.g.transpose())).transpose();

  fwd.psi_sub = target.basis.eigenfunctions(target_subset, Eigen::all);
  fwd.proj_sub = source.basis.eigenfunctions(source_subset, Eigen::all).transpose() *
                 source.basis.mass(source_subset).asDiagonal();
  fwd.raw = fwd.psi_sub * fwd.c * fwd.proj_sub;
  SoftCorrespondence soft;
  normalize_columns(fwd.raw, soft, fwd.col_sq_norm);
  fwd.q = std::move(soft.soft_map);

  const Matrix k_src = source_kernel(source_subset, source_subset);
  const Matrix k_tgt = target_kernel(target_subset, target_subset);
  fwd.kq = k_tgt * fwd.q;
  fwd.residual = k_src - fwd.q.transpose() * fwd.kq;
  const double n = static_cast<double>(source_subset.size());
  fwd.loss = fwd.residual.squaredNorm() / (n * n);
  return fwd;
}

PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const LossConfig& config, const std::vector<Index>& source_subset,
                         const std::vector<Index>& target_subset) {
  return forward_pair(params, source, target, source.supervisor.matrix, target.supervisor.matrix, config,
                      source_subset, target_subset);
}

PairForward forward_pair(const NetworkParams& params, const ShapeBundle& source, const ShapeBundle& target,
                         const LossConfig& config) {
  return forward_pair(params, source, target, config, iota_indices(source.n_vertices()),
                      iota_indices(target.n_vertices()));
}

NetworkParams backward(const NetworkParams& params, const PairForward& fwd) {
  const double n = static_cast<double>(fwd.q.cols());
  const double scale = 1.0 / (n * n);

  // d loss / dQ = -2/N^2 * K_t Q (R + R^T), kernels symmetric.
  const Matrix grad_q = (-2.0 * scale) * (fwd.kq * (fwd.residual + fwd.residual.transpose()));

  Matrix grad_raw = Matrix::Zero(fwd.raw.rows(), fwd.raw.cols());
  for (Index j = 0; j < fwd.raw.cols(); ++j) {
    if (!(fwd.col_sq_norm(j) > 0.0)) continue;
    const double mean = fwd.q.col(j).dot(grad_q.col(j));
    grad_raw.col(j) = (2.0 / fwd.col_sq_norm(j)) * fwd.raw.col(j).cwiseProduct(grad_q.col(j).array().matrix() -
                                                                               Vector::Constant(grad_q.rows(), mean));
  }

  const Matrix grad_c = (fwd.psi_sub.transpose() * grad_raw) * fwd.proj_sub.transpose();
  const Matrix grad_g = grad_c * fwd.h_inv * fwd.f;
  const Matrix y = fwd.c.transpose() * grad_c * fwd.h_inv;
  const Matrix grad_f = fwd.h_inv * grad_c.transpose() * fwd.g - (y + y.transpose()) * fwd.f;

  const SpectralBasis& sb = *fwd.src_basis;
  const SpectralBasis& tb = *fwd.tgt_basis;
  Matrix grad_src = sb.mass.asDiagonal() * (sb.eigenfunctions * grad_f);
  Matrix grad_tgt = tb.mass.asDiagonal() * (tb.eigenfunctions * grad_g);

  NetworkParams grads = params.zeros_like();
  if (fwd.shared_features) {
    backprop_blocks(params, fwd.src_inputs, fwd.src_pre, grad_src + grad_tgt, grads);
  } else {
    backprop_blocks(params, fwd.src_inputs, fwd.src_pre, std::move(grad_src), grads);
    backprop_blocks(params, fwd.tgt_inputs, fwd.tgt_pre, std::move(grad_tgt), grads);
  }

  for (Index b = 0; b < grads.layer_count(); ++b) {
    const auto& g = grads.blocks[static_cast<std::size_t>(b)];
    check_finite(g.w1, "W1", b);
    check_finite(g.w2, "W2", b);
    check_finite(g.b1, "b1", b);
    check_finite(g.b2, "b2", b);
  }
  return grads;
}

void accumulate(NetworkParams& into, const NetworkParams& grads) {
  auto dst = into.tensors();
  const auto src = grads.tensors();
  if (dst.size() != src.size()) throw Error(ErrorCategory::validation, "accumulate: parameter layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw Error(ErrorCategory::validation, "adam_step: parameter layouts differ");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i].cwiseAbs2();
    p[i].array() -= state.learning_rate * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + state.epsilon);
  }
}

void save_checkpoint(const NetworkParams& params, const AdamState& state, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path.string());
  binio::write_magic(os, "PRMS1");
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.layer_count()));
  binio::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.dim()));
  binio::write_pod<std::uint64_t>(os, params.seed);
  for (const auto& t : params.tensors()) binio::write_array(os, t.data(), static_cast<std::size_t>(t.size()));
  binio::write_pod<std::int64_t>(os, state.step_count);
  binio::write_pod(os, state.learning_rate);
  binio::write_pod(os, state.beta1);
  binio::write_pod(os, state.beta2);
  binio::write_pod(os, state.epsilon);
  for (const auto& t : state.first_moment.tensors()) binio::write_array(os, t.data(), static_cast<std::size_t>(t.size()));
  for (const auto& t : state.second_moment.tensors()) binio::write_array(os, t.data(), static_cast<std::size_t>(t.size()));
  if (!os) throw Error(ErrorCategory::io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot open checkpoint " + path.string());
  binio::expect_magic(is, "PRMS1");
  const auto layers = binio::read_pod<std::uint64_t>(is, "layer count");
  const auto dim = binio::read_pod<std::uint64_t>(is, "dimension");
  const auto seed = binio::read_pod<std::uint64_t>(is, "seed");
  if (layers < 1 || layers > 1000 || dim < 1 || dim > 100000) {
    throw Error(ErrorCategory::parse, path.string() + ": implausible checkpoint header");
  }
  Checkpoint ck;
  ck.params = init_params(static_cast<Index>(dim), static_cast<int>(layers), seed).zeros_like();
  for (auto& t : ck.params.tensors()) binio::read_array(is, t.data(), static_cast<std::size_t>(t.size()), "parameters");
  ck.state = AdamState::fresh(ck.params);
  ck.state.step_count = binio::read_pod<std::int64_t>(is, "step count");
  ck.state.learning_rate = binio::read_pod<double>(is, "learning rate");
  ck.state.beta1 = binio::read_pod<double>(is, "beta1");
  ck.state.beta2 = binio::read_pod<double>(is, "beta2");
  ck.state.epsilon = binio::read_pod<double>(is, "epsilon");
  for (auto& t : ck.state.first_moment.tensors()) binio::read_array(is, t.data(), static_cast<std::size_t>(t.size()), "first moment");
  for (auto& t : ck.state.second_moment.tensors()) binio::read_array(is, t.data(), static_cast<std::size_t>(t.size()), "second moment");
  return ck;
}

}  // namespace heatcorr
