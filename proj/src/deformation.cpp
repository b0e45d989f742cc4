// deformation.cpp

#include "splat4d/deformation.hpp"

#include "splat4d/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace splat4d {

namespace {

// Writes the encoding of x into out[0 .. dims*(1+2*bands)).
void encode_into(const double* x, int dims, int bands, double* out) {
  for (int d = 0; d < dims; ++d) out[d] = x[d];
  double freq = std::numbers::pi;
  for (int k = 0; k < bands; ++k, freq *= 2.0) {
    double* s = out + dims * (1 + 2 * k);
    double* c = s + dims;
    for (int d = 0; d < dims; ++d) {
      s[d] = std::sin(freq * x[d]);
      c[d] = std::cos(freq * x[d]);
    }
  }
}

// Accumulates d(encoding)/dx^T * grad into dx.
void encode_backward(const double* x, int dims, int bands, const double* grad, double* dx) {
  for (int d = 0; d < dims; ++d) dx[d] += grad[d];
  double freq = std::numbers::pi;
  for (int k = 0; k < bands; ++k, freq *= 2.0) {
    const double* gs = grad + dims * (1 + 2 * k);
    const double* gc = gs + dims;
    for (int d = 0; d < dims; ++d)
      dx[d] += freq * (gs[d] * std::cos(freq * x[d]) - gc[d] * std::sin(freq * x[d]));
  }
}

}  // namespace

std::vector<double> positional_encode(std::span<const double> x, int bands) {
  if (bands < 0) throw UsageError("frequency band count must be non-negative");
  const int dims = static_cast<int>(x.size());
  std::vector<double> out(static_cast<std::size_t>(encoded_size(dims, bands)));
  encode_into(x.data(), dims, bands, out.data());
  return out;
}

DeformField::DeformField(const DeformFieldConfig& config) : config_(config) {
  if (config.hidden < 1 || config.center_bands < 0 || config.time_bands < 0)
    throw UsageError("invalid deformation field architecture");
  params_.assign(b_offset(2) + kOutputs, 0.0);
}

std::size_t DeformField::w_offset(int layer) const {
  std::size_t offset = 0;
  for (int l = 0; l < layer; ++l) offset += static_cast<std::size_t>(rows(l)) * cols(l) + rows(l);
  return offset;
}

DeformField DeformField::initialize(const DeformFieldConfig& config, std::uint64_t seed) {
  DeformField field(config);
  std::mt19937_64 rng(seed);
  for (int layer = 0; layer < 2; ++layer) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(field.cols(layer)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = field.weight(layer);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    auto b = field.bias(layer);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
  }
  return field;
}

GaussianCloud DeformedCloud::materialize() const {
  if (!base || base->size() != size()) throw UsageError("deformed cloud is not bound to a matching base cloud");
  GaussianCloud out = *base;
  for (std::size_t i = 0; i < size(); ++i) {
    out.gaussians[i].center = centers[i];
    out.gaussians[i].rotation = rotations[i];
    out.gaussians[i].scale = scales[i];
  }
  return out;
}

DeformPass deform(const DeformField& field, const GaussianCloud& cloud, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("timestep must lie in [0, 1]");
  const auto& cfg = field.config();
  const int m = static_cast<int>(cloud.size());
  const int center_dim = encoded_size(3, cfg.center_bands);

  DeformPass pass;
  DeformTape& tape = pass.tape;
  tape.timestep = tau;
  tape.input.resize(field.input_dim(), m);
  std::vector<double> time_code(static_cast<std::size_t>(encoded_size(1, cfg.time_bands)));
  encode_into(&tau, 1, cfg.time_bands, time_code.data());
  for (int i = 0; i < m; ++i) {
    double* col = tape.input.col(i).data();
    encode_into(cloud.gaussians[i].center.data(), 3, cfg.center_bands, col);
    std::copy(time_code.begin(), time_code.end(), col + center_dim);
  }

  tape.z1.noalias() = field.weight(0) * tape.input;
  tape.z1.colwise() += field.bias(0);
  tape.z2.noalias() = field.weight(1) * tape.z1.cwiseMax(0.0);
  tape.z2.colwise() += field.bias(1);
  tape.output.noalias() = field.weight(2) * tape.z2.cwiseMax(0.0);
  tape.output.colwise() += field.bias(2);
  if (!tape.output.allFinite()) throw NumericalError("deformation field produced non-finite activations");

  DeformedCloud& out = pass.cloud;
  out.base = &cloud;
  out.timestep = tau;
  out.centers.resize(m);
  out.rotations.resize(m);
  out.scales.resize(m);
  for (int i = 0; i < m; ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const auto o = tape.output.col(i);
    out.centers[i] = g.center + o.segment<3>(0);
    const Quat dq = o.segment<4>(3);
    // A zero delta keeps the stored rotation bit-for-bit.
    out.rotations[i] = dq.isZero(0.0) ? g.rotation : Quat((g.rotation + dq).normalized());
    out.scales[i] = g.scale.cwiseProduct(o.segment<3>(7).array().exp().matrix());
  }
  return pass;
}

DeformBackward deform_backward(const DeformField& field, const GaussianCloud& base, const DeformTape& tape,
                               const DeformedCloudGradients& grads) {
  const int m = static_cast<int>(base.size());
  if (tape.input.cols() != m || tape.output.cols() != m || static_cast<int>(grads.size()) != m)
    throw UsageError("deformation tape does not match the cloud or gradient size");
  if (tape.input.rows() != field.input_dim() || tape.z1.rows() != field.config().hidden)
    throw UsageError("deformation tape was recorded with a different architecture");

  const auto& cfg = field.config();
  Eigen::MatrixXd d_out(DeformField::kOutputs, m);
  DeformBackward result;
  result.base = CloudGradients(base.size());

  for (int i = 0; i < m; ++i) {
    const Gaussian& g = base.gaussians[i];
    const auto o = tape.output.col(i);

    d_out.col(i).segment<3>(0) = grads.centers[i];
    result.base.center[i] = grads.centers[i];

    const Quat raw = g.rotation + Quat(o.segment<4>(3));
    const double norm = raw.norm();
    const Quat unit = raw / norm;
    const Quat d_raw = (grads.rotations[i] - unit * unit.dot(grads.rotations[i])) / norm;
    d_out.col(i).segment<4>(3) = d_raw;
    result.base.rotation[i] = d_raw;

    const Vec3 growth = o.segment<3>(7).array().exp().matrix();
    d_out.col(i).segment<3>(7) = grads.scales[i].cwiseProduct(g.scale).cwiseProduct(growth);
    result.base.scale[i] = grads.scales[i].cwiseProduct(growth);
  }

  result.weights.assign(field.parameter_count(), 0.0);
  DeformField grad_field(cfg);
  const Eigen::MatrixXd h1 = tape.z1.cwiseMax(0.0);
  const Eigen::MatrixXd h2 = tape.z2.cwiseMax(0.0);

  grad_field.weight(2).noalias() = d_out * h2.transpose();
  grad_field.bias(2) = d_out.rowwise().sum();
  Eigen::MatrixXd d_z2 = field.weight(2).transpose() * d_out;
  d_z2 = d_z2.cwiseProduct((tape.z2.array() > 0.0).cast<double>().matrix());
  grad_field.weight(1).noalias() = d_z2 * h1.transpose();
  grad_field.bias(1) = d_z2.rowwise().sum();
  Eigen::MatrixXd d_z1 = field.weight(1).transpose() * d_z2;
  d_z1 = d_z1.cwiseProduct((tape.z1.array() > 0.0).cast<double>().matrix());
  grad_field.weight(0).noalias() = d_z1 * tape.input.transpose();
  grad_field.bias(0) = d_z1.rowwise().sum();
  const Eigen::MatrixXd d_input = field.weight(0).transpose() * d_z1;

  for (int i = 0; i < m; ++i)
    encode_backward(base.gaussians[i].center.data(), 3, cfg.center_bands, d_input.col(i).data(),
                    result.base.center[i].data());

  const auto p = grad_field.parameters();
  result.weights.assign(p.begin(), p.end());
  return result;
}

}  // namespace splat4d
