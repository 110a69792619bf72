#include "dtcalib/imu_preint.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dtcalib/errors.hpp"

namespace dtcalib {

ImuNoiseModel ImuNoiseModel::FromDensities(double gyro_density, double accel_density, double sample_period) {
  if (!(sample_period > 0.0)) throw ConfigError("IMU sample period must be positive");
  const double s = 1.0 / std::sqrt(sample_period);
  ImuNoiseModel m{gyro_density * s, accel_density * s};
  m.validate();
  return m;
}

void ImuNoiseModel::validate() const {
  if (!(sigma_gyro > 0.0) || !(sigma_accel > 0.0) || !std::isfinite(sigma_gyro) || !std::isfinite(sigma_accel)) {
    throw ConfigError("IMU noise standard deviations must be finite and strictly positive");
  }
}

const char* to_string(IntegrationScheme s) {
  return s == IntegrationScheme::Euler ? "euler" : "midpoint";
}

IntegrationScheme scheme_from_string(const std::string& s) {
  if (s == "euler") return IntegrationScheme::Euler;
  if (s == "midpoint") return IntegrationScheme::Midpoint;
  throw ConfigError("unknown integration scheme '" + s + "' (expected euler|midpoint)");
}

ImuSample interpolate_sample(const ImuSample& s0, const ImuSample& s1, double t) {
  if (!(s0.t < s1.t)) throw RangeError("interpolate_sample: samples must have increasing times");
  if (t < s0.t || t > s1.t) throw RangeError("interpolate_sample: t outside [s0.t, s1.t]");
  if (t == s0.t) return s0;
  if (t == s1.t) return s1;
  const double alpha = (t - s0.t) / (s1.t - s0.t);
  ImuSample out;
  out.t = t;
  out.gyro = s0.gyro + alpha * (s1.gyro - s0.gyro);
  out.accel = s0.accel + alpha * (s1.accel - s0.accel);
  return out;
}

std::vector<ImuSample> bracket_samples(std::span<const ImuSample> stream, double t_start, double t_end) {
  if (!(t_end > t_start)) throw CoverageError("integration window must have positive length");
  if (stream.size() < 2 || stream.front().t > t_start || stream.back().t < t_end) {
    throw CoverageError("IMU samples do not cover [" + std::to_string(t_start) + ", " + std::to_string(t_end) + "]");
  }
  const auto by_time = [](const ImuSample& s, double t) { return s.t < t; };
  // First sample with t >= t_start / t >= t_end.
  const auto first = std::lower_bound(stream.begin(), stream.end(), t_start, by_time);
  const auto last = std::lower_bound(first, stream.end(), t_end, by_time);

  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(last - first) + 2);
  auto it = first;
  if (it->t == t_start) {
    out.push_back(*it);
    ++it;
  } else {
    out.push_back(interpolate_sample(*(first - 1), *first, t_start));
  }
  for (; it != last; ++it) {
    if (!(it->t > out.back().t)) throw FormatError("IMU timestamps must be strictly increasing");
    out.push_back(*it);
  }
  if (last->t == t_end) {
    if (!(last->t > out.back().t)) throw FormatError("IMU timestamps must be strictly increasing");
    out.push_back(*last);
  } else {
    out.push_back(interpolate_sample(*(last - 1), *last, t_end));
  }
  return out;
}

DeltaState integration_step(const DeltaState& d, const ImuSample& s0, const ImuSample& s1,
                            const Vec3& bias_gyro, const Vec3& bias_accel, IntegrationScheme scheme,
                            StepJacobians* jac) {
  const double dt = s1.t - s0.t;
  const double dt2 = dt * dt;
  DeltaState out;

  if (scheme == IntegrationScheme::Midpoint) {
    const Vec3 w = 0.5 * (s0.gyro + s1.gyro) - bias_gyro;
    const Vec3 phi = w * dt;
    out.R = d.R * so3_exp(phi);
    const Vec3 Ra0 = d.R * (s0.accel - bias_accel);
    const Vec3 Ra1 = out.R * (s1.accel - bias_accel);
    const Vec3 a_avg = 0.5 * (Ra0 + Ra1);
    out.v = d.v + a_avg * dt;
    out.p = d.p + d.v * dt + 0.5 * a_avg * dt2;

    if (jac != nullptr) {
      const Mat3 skew_sum = hat(Ra0) + hat(Ra1);
      jac->F.setIdentity();
      jac->F.block<3, 3>(3, 0) = -0.5 * dt * skew_sum;
      jac->F.block<3, 3>(6, 0) = -0.25 * dt2 * skew_sum;
      jac->F.block<3, 3>(6, 3) = dt * Mat3::Identity();

      // Sensitivity to the averaged rate; each raw gyro reading contributes half.
      const Mat3 dR_dw = d.R * left_jacobian_so3(phi) * dt;
      Mat93 G_w;
      G_w.block<3, 3>(0, 0) = dR_dw;
      G_w.block<3, 3>(3, 0) = -0.5 * dt * hat(Ra1) * dR_dw;
      G_w.block<3, 3>(6, 0) = -0.25 * dt2 * hat(Ra1) * dR_dw;
      jac->G_gyro0 = 0.5 * G_w;
      jac->G_gyro1 = 0.5 * G_w;

      jac->G_accel0.setZero();
      jac->G_accel0.block<3, 3>(3, 0) = 0.5 * dt * d.R;
      jac->G_accel0.block<3, 3>(6, 0) = 0.25 * dt2 * d.R;
      jac->G_accel1.setZero();
      jac->G_accel1.block<3, 3>(3, 0) = 0.5 * dt * out.R;
      jac->G_accel1.block<3, 3>(6, 0) = 0.25 * dt2 * out.R;
    }
  } else {
    const Vec3 phi = (s0.gyro - bias_gyro) * dt;
    out.R = d.R * so3_exp(phi);
    const Vec3 Ra0 = d.R * (s0.accel - bias_accel);
    out.v = d.v + Ra0 * dt;
    out.p = d.p + d.v * dt + 0.5 * Ra0 * dt2;

    if (jac != nullptr) {
      const Mat3 skew = hat(Ra0);
      jac->F.setIdentity();
      jac->F.block<3, 3>(3, 0) = -dt * skew;
      jac->F.block<3, 3>(6, 0) = -0.5 * dt2 * skew;
      jac->F.block<3, 3>(6, 3) = dt * Mat3::Identity();

      jac->G_gyro0.setZero();
      jac->G_gyro0.block<3, 3>(0, 0) = d.R * left_jacobian_so3(phi) * dt;
      jac->G_gyro1.setZero();
      jac->G_accel0.setZero();
      jac->G_accel0.block<3, 3>(3, 0) = dt * d.R;
      jac->G_accel0.block<3, 3>(6, 0) = 0.5 * dt2 * d.R;
      jac->G_accel1.setZero();
    }
  }
  return out;
}

void bias_jacobian_step(const StepJacobians& step, Mat93& J_gyro, Mat93& J_accel) {
  J_gyro = step.F * J_gyro + step.bias_gyro();
  J_accel = step.F * J_accel + step.bias_accel();
}

void propagate_covariance_step(const StepJacobians& step, const ImuNoiseModel& noise, Mat9& cov) {
  const double qw = noise.sigma_gyro * noise.sigma_gyro;
  const double qa = noise.sigma_accel * noise.sigma_accel;
  // F = [[I, 0, 0], [A, I, 0], [B, dt I, I]]
  const Mat3 A = step.F.block<3, 3>(3, 0);
  const Mat3 B = step.F.block<3, 3>(6, 0);
  const double dt = step.F(6, 3);
  Mat9 T;
  T.topRows<3>() = cov.topRows<3>();
  T.middleRows<3>(3).noalias() = A * cov.topRows<3>();
  T.middleRows<3>(3) += cov.middleRows<3>(3);
  T.bottomRows<3>().noalias() = B * cov.topRows<3>();
  T.bottomRows<3>() += dt * cov.middleRows<3>(3) + cov.bottomRows<3>();
  Mat9 next;
  next.leftCols<3>() = T.leftCols<3>();
  next.middleCols<3>(3).noalias() = T.leftCols<3>() * A.transpose();
  next.middleCols<3>(3) += T.middleCols<3>(3);
  next.rightCols<3>().noalias() = T.leftCols<3>() * B.transpose();
  next.rightCols<3>() += dt * T.middleCols<3>(3) + T.rightCols<3>();

  next.noalias() += qw * step.G_gyro0 * step.G_gyro0.transpose();
  next.noalias() += qw * step.G_gyro1 * step.G_gyro1.transpose();
  next.noalias() += qa * step.G_accel0 * step.G_accel0.transpose();
  next.noalias() += qa * step.G_accel1 * step.G_accel1.transpose();
  cov = 0.5 * (next + next.transpose());
}

namespace {

PreintegratedImu integrate_bracketed(std::vector<ImuSample> samples, const Vec3& bias_gyro,
                                     const Vec3& bias_accel, const ImuNoiseModel& noise,
                                     IntegrationScheme scheme) {
  noise.validate();
  if (samples.size() < 2) throw CoverageError("need at least two samples to integrate");

  PreintegratedImu out;
  out.t_start = samples.front().t;
  out.t_end = samples.back().t;
  out.dt = out.t_end - out.t_start;
  out.bias_gyro = bias_gyro;
  out.bias_accel = bias_accel;
  out.scheme = scheme;

  DeltaState d;
  StepJacobians step;
  for (std::size_t j = 0; j + 1 < samples.size(); ++j) {
    if (!(samples[j + 1].t > samples[j].t)) throw FormatError("IMU timestamps must be strictly increasing");
    d = integration_step(d, samples[j], samples[j + 1], bias_gyro, bias_accel, scheme, &step);
    bias_jacobian_step(step, out.J_bias_gyro, out.J_bias_accel);
    propagate_covariance_step(step, noise, out.cov);
  }
  out.delta_R = d.R;
  out.delta_v = d.v;
  out.delta_p = d.p;
  out.samples = std::move(samples);
  return out;
}

}  // namespace

PreintegratedImu integrate(std::span<const ImuSample> samples, double t_start, double t_end,
                           const Vec3& bias_gyro, const Vec3& bias_accel, const ImuNoiseModel& noise,
                           IntegrationScheme scheme) {
  return integrate_bracketed(bracket_samples(samples, t_start, t_end), bias_gyro, bias_accel, noise, scheme);
}

PreintegratedImu reintegrate(const PreintegratedImu& pre, const Vec3& bias_gyro, const Vec3& bias_accel,
                             const ImuNoiseModel& noise) {
  return integrate_bracketed(pre.samples, bias_gyro, bias_accel, noise, pre.scheme);
}

}  // namespace dtcalib
