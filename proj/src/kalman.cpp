#include "gradpf/kalman.hpp"

#include "gradpf/gaussian.hpp"

namespace gradpf::kalman {

using ssm::LinearGaussianForm;
using ssm::ObservationSpec;
using ssm::ProposalSpec;
using ssm::TransitionSpec;

KfResult kf_run(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta) {
  const LinearGaussianForm lf = model.linear_form(theta);
  const int n = model.param_dim();
  Vec m = lf.m0;
  Mat p = lf.p0;
  std::array<Vec, kMaxDim> dm;
  Slices dp;
  for (int j = 0; j < n; ++j) {
    dm[j] = lf.dm0[j];
    dp[j] = lf.dp0[j];
  }
  KfResult out;
  out.grad = Vec::Zero(n);
  out.filtered.reserve(y.size());
  for (const Vec& yt : y) {
    const Vec m_pred = lf.f * m + lf.b;
    const Mat p_pred = lf.f * p * lf.f.transpose() + lf.q;
    const Vec innov = yt - lf.h * m_pred - lf.c;
    const Mat s = lf.h * p_pred * lf.h.transpose() + lf.r;
    const gauss::LogNormalEval ln =
        gauss::log_normal_eval(innov, Vec::Zero(innov.size()), s, "innovation covariance");
    out.loglik += ln.value;
    const Mat s_inv = s.inverse();
    const Mat gain = p_pred * lf.h.transpose() * s_inv;
    const Vec m_new = m_pred + gain * innov;
    Mat p_new = p_pred - gain * lf.h * p_pred;
    for (int j = 0; j < n; ++j) {
      const Vec dm_pred = lf.df[j] * m + lf.f * dm[j] + lf.db[j];
      const Mat dp_pred = lf.df[j] * p * lf.f.transpose() + lf.f * dp[j] * lf.f.transpose() +
                          lf.f * p * lf.df[j].transpose() + lf.dq[j];
      const Vec dinnov = -lf.dh[j] * m_pred - lf.h * dm_pred - lf.dc[j];
      const Mat ds = lf.dh[j] * p_pred * lf.h.transpose() + lf.h * dp_pred * lf.h.transpose() +
                     lf.h * p_pred * lf.dh[j].transpose() + lf.dr[j];
      out.grad(j) += ln.grad.dx.dot(dinnov) + contract(ln.grad.dcov, ds);
      const Mat ds_inv = gauss::inv_derivative(s, ds);
      const Mat dgain = dp_pred * lf.h.transpose() * s_inv +
                        p_pred * lf.dh[j].transpose() * s_inv + p_pred * lf.h.transpose() * ds_inv;
      dm[j] = dm_pred + dgain * innov + gain * dinnov;
      dp[j] = dp_pred - dgain * lf.h * p_pred - gain * lf.dh[j] * p_pred - gain * lf.h * dp_pred;
    }
    m = m_new;
    p = 0.5 * (p_new + p_new.transpose());
    out.filtered.push_back({m, p});
  }
  return out;
}

double kf_loglik(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta) {
  return kf_run(model, y, theta).loglik;
}

Vec kf_loglik_grad(const ssm::Model& model, const std::vector<Vec>& y, const Vec& theta) {
  return kf_run(model, y, theta).grad;
}

ProposalSpec ekf_proposal(const TransitionSpec& tr, const ObservationSpec& ob, const Vec& y) {
  const int nx = static_cast<int>(tr.a.size());
  const int ny = static_cast<int>(ob.h.size());
  const int nt = static_cast<int>(tr.da_dtheta.cols());
  if (y.size() != ny) throw DimensionError("ekf_proposal: observation dimension mismatch");

  const Mat& q = tr.sigma;
  const Mat& hm = ob.dh_dx;  // H~ evaluated at the prior mean
  const Mat s = hm * q * hm.transpose() + ob.r;
  Eigen::FullPivLU<Mat> lu(s);
  if (!lu.isInvertible()) throw SingularMatrixError("ekf_proposal: innovation covariance is singular");
  const Mat s_inv = lu.inverse();
  const Mat gain = q * hm.transpose() * s_inv;
  const Vec resid = y - ob.h;

  ProposalSpec p;
  p.mu = tr.a + gain * resid;
  Mat c = q - gain * hm * q;
  p.c = 0.5 * (c + c.transpose());
  p.dmu_dx = Mat::Zero(nx, nx);
  p.dmu_dtheta = Mat::Zero(nx, nt);
  p.c_depends_on_x = false;

  // Derivatives of mu and C along one direction, given the directional
  // derivatives of the prior mean a, Q, h~, H~ and R~.
  auto directional = [&](const Vec& da, const Mat& dq, const Vec& dh, const Mat& dhm,
                         const Mat& dr, Vec& dmu, Mat& dc) {
    const Mat ds = dhm * q * hm.transpose() + hm * dq * hm.transpose() +
                   hm * q * dhm.transpose() + dr;
    const Mat ds_inv = gauss::inv_derivative(s, ds);
    const Mat dgain = dq * hm.transpose() * s_inv + q * dhm.transpose() * s_inv +
                      q * hm.transpose() * ds_inv;
    dmu = da + dgain * resid - gain * dh;
    const Mat dcr = dq - dgain * hm * q - gain * dhm * q - gain * hm * dq;
    dc = 0.5 * (dcr + dcr.transpose());
  };

  auto hessian_apply = [&](const Vec& direction) {
    // dH~ along a change `direction` of the prior mean.
    Mat dhm = Mat::Zero(ny, nx);
    for (int i = 0; i < ny; ++i) dhm.row(i) = (ob.d2h_dx2[i] * direction).transpose();
    return dhm;
  };

  for (int k = 0; k < nx; ++k) {
    const Vec da = tr.da_dx.col(k);
    const Mat dq = tr.sigma_depends_on_x ? tr.dsigma_dx[k] : Mat::Zero(nx, nx);
    const Vec dh = hm * da;
    const Mat dhm = hessian_apply(da);
    Mat dr = Mat::Zero(ny, ny);
    if (ob.r_depends_on_x) {
      for (int l = 0; l < nx; ++l) dr += ob.dr_dx[l] * da(l);
    }
    Vec dmu;
    Mat dc;
    directional(da, dq, dh, dhm, dr, dmu, dc);
    p.dmu_dx.col(k) = dmu;
    p.dc_dx[k] = dc;
    if (!dc.isZero(0.0)) p.c_depends_on_x = true;
  }
  for (int j = 0; j < nt; ++j) {
    const Vec da = tr.da_dtheta.col(j);
    const Mat& dq = tr.dsigma_dtheta[j];
    const Vec dh = hm * da + ob.dh_dtheta.col(j);
    Mat dhm = hessian_apply(da);
    for (int i = 0; i < ny; ++i) dhm.row(i) += ob.d2h_dxdtheta[i].col(j).transpose();
    Mat dr = ob.dr_dtheta[j];
    if (ob.r_depends_on_x) {
      for (int l = 0; l < nx; ++l) dr += ob.dr_dx[l] * da(l);
    }
    Vec dmu;
    Mat dc;
    directional(da, dq, dh, dhm, dr, dmu, dc);
    p.dmu_dtheta.col(j) = dmu;
    p.dc_dtheta[j] = dc;
  }
  return p;
}

}  // namespace gradpf::kalman
