#include "gaze3d/pose_estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gaze3d/rng.hpp"

namespace gaze3d {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kPlanarityRatio = 1e-6;

struct EpnpProblem {
  int n = 0;
  int nc = 4;                    // control points (3 on the planar branch)
  std::vector<Vec3> cw;          // control points, world frame
  Eigen::MatrixXd alphas;        // n x nc barycentric coordinates
  Eigen::MatrixXd kernel;        // 3*nc x nk, column 0 = smallest singular value
  std::vector<std::pair<int, int>> pairs;
  Eigen::VectorXd rho;           // squared control-point distances
};

int product_index(int k, int l) {
  // Products (k,l) with k <= l, laid out as b00, b01, b11, b02, b12, b22, ...
  if (k > l) std::swap(k, l);
  return l * (l + 1) / 2 + k;
}

Eigen::VectorXd beta_products(const Eigen::VectorXd& beta) {
  const int nk = static_cast<int>(beta.size());
  Eigen::VectorXd prod(nk * (nk + 1) / 2);
  for (int l = 0; l < nk; ++l)
    for (int k = 0; k <= l; ++k) prod(product_index(k, l)) = beta(k) * beta(l);
  return prod;
}

// Least-squares solve of an over- or exactly-determined small dense system.
Eigen::VectorXd solve_ls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.colPivHouseholderQr().solve(b);
}

void gauss_newton_betas(const Eigen::MatrixXd& L, const Eigen::VectorXd& rho,
                        Eigen::VectorXd& beta) {
  const int nk = static_cast<int>(beta.size());
  for (int iter = 0; iter < 20; ++iter) {
    const Eigen::VectorXd r = L * beta_products(beta) - rho;
    Eigen::MatrixXd J(L.rows(), nk);
    for (int c = 0; c < nk; ++c) {
      Eigen::VectorXd dprod = Eigen::VectorXd::Zero(L.cols());
      for (int k = 0; k < nk; ++k) {
        const int idx = product_index(k, c);
        dprod(idx) += (k == c) ? 2.0 * beta(c) : beta(k);
      }
      J.col(c) = L * dprod;
    }
    const Eigen::VectorXd delta = solve_ls(J, -r);
    if (!delta.allFinite()) break;
    beta += delta;
    if (delta.norm() < 1e-14) break;
  }
}

double candidate_rmse(const Pose& pose, const std::vector<Correspondence>& corrs,
                      const CameraIntrinsics& intr) {
  double sum = 0.0;
  for (const auto& c : corrs) {
    const Vec3 pc = pose.to_camera(c.point);
    if (pc.z() <= kMinDepth) {
      sum += 1e12;  // behind-camera candidates must lose
      continue;
    }
    const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
    sum += (px - c.pixel).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(corrs.size()));
}

// Closed-form alignment p_cam = R * p_world + t from paired point sets.
void align_point_sets(const std::vector<Vec3>& pw, const std::vector<Vec3>& pc, Mat3& R, Vec3& t) {
  const int n = static_cast<int>(pw.size());
  Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    cw += pw[i];
    cc += pc[i];
  }
  cw /= n;
  cc /= n;
  Mat3 H = Mat3::Zero();
  for (int i = 0; i < n; ++i) H += (pw[i] - cw) * (pc[i] - cc).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  R = V * U.transpose();
  if (R.determinant() < 0.0) {
    V.col(2) = -V.col(2);
    R = V * U.transpose();
  }
  t = cc - R * cw;
}

Pose pose_from_betas(const EpnpProblem& prob, const std::vector<Correspondence>& corrs,
                     const Eigen::VectorXd& beta) {
  Eigen::VectorXd x = prob.kernel * beta;
  std::vector<Vec3> pc(prob.n);
  auto expand = [&]() {
    for (int i = 0; i < prob.n; ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < prob.nc; ++j) p += prob.alphas(i, j) * x.segment<3>(3 * j);
      pc[i] = p;
    }
  };
  expand();
  int positive = 0;
  for (const auto& p : pc)
    if (p.z() > 0.0) ++positive;
  if (2 * positive < prob.n) {
    x = -x;
    expand();
  }
  std::vector<Vec3> pw(prob.n);
  for (int i = 0; i < prob.n; ++i) pw[i] = corrs[i].point;
  Mat3 R_cw;
  Vec3 t_cw;
  align_point_sets(pw, pc, R_cw, t_cw);
  Pose pose;  // camera-to-world
  pose.R = R_cw.transpose();
  pose.t = -(pose.R * t_cw);
  return pose;
}

}  // namespace

Pose epnp_solve(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr) {
  const int n = static_cast<int>(corrs.size());
  if (n < 4) fail(Errc::insufficient_correspondences, "EPnP needs at least 4 correspondences");

  EpnpProblem prob;
  prob.n = n;

  // Control points: centroid plus scaled principal axes of the world points.
  Vec3 centroid = Vec3::Zero();
  for (const auto& c : corrs) centroid += c.point;
  centroid /= n;
  Mat3 scatter = Mat3::Zero();
  for (const auto& c : corrs) {
    const Vec3 d = c.point - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 evals = eig.eigenvalues();  // ascending
  if (evals(2) <= 0.0 || evals(1) / evals(2) < kPlanarityRatio)
    fail(Errc::degenerate_configuration, "world points are collinear or coincident");
  const bool planar = evals(0) / evals(2) < kPlanarityRatio;

  prob.nc = planar ? 3 : 4;
  prob.cw.resize(prob.nc);
  prob.cw[0] = centroid;
  for (int j = 1; j < prob.nc; ++j) {
    const int axis = 2 - (j - 1);  // descending eigenvalue order
    prob.cw[j] = centroid + std::sqrt(evals(axis) / n) * eig.eigenvectors().col(axis);
  }

  // Barycentric coordinates of every point w.r.t. the control points.
  prob.alphas.resize(n, prob.nc);
  if (planar) {
    Eigen::Matrix<double, 3, 2> B;
    B.col(0) = prob.cw[1] - prob.cw[0];
    B.col(1) = prob.cw[2] - prob.cw[0];
    const Eigen::Matrix2d BtB = B.transpose() * B;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d a = BtB.ldlt().solve(B.transpose() * (corrs[i].point - prob.cw[0]));
      prob.alphas(i, 0) = 1.0 - a(0) - a(1);
      prob.alphas(i, 1) = a(0);
      prob.alphas(i, 2) = a(1);
    }
  } else {
    Mat3 C;
    for (int j = 0; j < 3; ++j) C.col(j) = prob.cw[j + 1] - prob.cw[0];
    const Mat3 Cinv = C.inverse();
    for (int i = 0; i < n; ++i) {
      const Vec3 a = Cinv * (corrs[i].point - prob.cw[0]);
      prob.alphas(i, 0) = 1.0 - a.sum();
      prob.alphas(i, 1) = a(0);
      prob.alphas(i, 2) = a(1);
      prob.alphas(i, 3) = a(2);
    }
  }

  // Projection constraints: two rows per point over the stacked camera-frame
  // control point coordinates.
  const int cols = 3 * prob.nc;
  Eigen::MatrixXd M(2 * n, cols);
  for (int i = 0; i < n; ++i) {
    const double u = corrs[i].pixel.x();
    const double v = corrs[i].pixel.y();
    for (int j = 0; j < prob.nc; ++j) {
      const double a = prob.alphas(i, j);
      M(2 * i, 3 * j + 0) = a * intr.fx;
      M(2 * i, 3 * j + 1) = 0.0;
      M(2 * i, 3 * j + 2) = a * (intr.cx - u);
      M(2 * i + 1, 3 * j + 0) = 0.0;
      M(2 * i + 1, 3 * j + 1) = a * intr.fy;
      M(2 * i + 1, 3 * j + 2) = a * (intr.cy - v);
    }
  }

  // Full V: with n = 4 the thin factorization would omit the kernel columns.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
  const Eigen::MatrixXd& V = svd.matrixV();
  const int nk = planar ? 3 : 4;
  prob.kernel.resize(cols, nk);
  for (int k = 0; k < nk; ++k) prob.kernel.col(k) = V.col(cols - 1 - k);

  if (planar) {
    prob.pairs = {{0, 1}, {0, 2}, {1, 2}};
  } else {
    prob.pairs = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  }
  const int np = static_cast<int>(prob.pairs.size());
  prob.rho.resize(np);
  for (int e = 0; e < np; ++e)
    prob.rho(e) = (prob.cw[prob.pairs[e].first] - prob.cw[prob.pairs[e].second]).squaredNorm();

  // L maps beta products to squared camera-frame control point distances.
  const int nprod = nk * (nk + 1) / 2;
  Eigen::MatrixXd L(np, nprod);
  for (int e = 0; e < np; ++e) {
    const auto [i, j] = prob.pairs[e];
    std::vector<Vec3> dv(nk);
    for (int k = 0; k < nk; ++k)
      dv[k] = prob.kernel.col(k).segment<3>(3 * i) - prob.kernel.col(k).segment<3>(3 * j);
    for (int l = 0; l < nk; ++l)
      for (int k = 0; k <= l; ++k)
        L(e, product_index(k, l)) = (k == l) ? dv[k].dot(dv[l]) : 2.0 * dv[k].dot(dv[l]);
  }

  // Candidate beta initializations for null-space dimensions N = 1..nk.
  std::vector<Eigen::VectorXd> candidates;
  {
    // N = 1: scale on the smallest-singular-value kernel vector.
    const double denom = L.col(0).squaredNorm();
    const double b2 = denom > 0.0 ? L.col(0).dot(prob.rho) / denom : 0.0;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(nk);
    beta(0) = std::sqrt(std::max(b2, 0.0));
    candidates.push_back(beta);
  }
  if (nk >= 2) {
    // N = 2: solve for (b00, b01, b11).
    Eigen::MatrixXd A(np, 3);
    A.col(0) = L.col(product_index(0, 0));
    A.col(1) = L.col(product_index(0, 1));
    A.col(2) = L.col(product_index(1, 1));
    const Eigen::VectorXd x = solve_ls(A, prob.rho);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(nk);
    beta(0) = std::sqrt(std::abs(x(0)));
    beta(1) = std::sqrt(std::abs(x(2)));
    if (x(1) < 0.0) beta(1) = -beta(1);
    candidates.push_back(beta);
  }
  if (nk >= 3 && np >= 5) {
    // N = 3: solve for (b00, b01, b11, b02, b12).
    Eigen::MatrixXd A(np, 5);
    A.col(0) = L.col(product_index(0, 0));
    A.col(1) = L.col(product_index(0, 1));
    A.col(2) = L.col(product_index(1, 1));
    A.col(3) = L.col(product_index(0, 2));
    A.col(4) = L.col(product_index(1, 2));
    const Eigen::VectorXd x = solve_ls(A, prob.rho);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(nk);
    beta(0) = std::sqrt(std::abs(x(0)));
    beta(1) = std::sqrt(std::abs(x(2)));
    if (x(1) < 0.0) beta(1) = -beta(1);
    if (beta(0) > 1e-12) beta(2) = x(3) / beta(0);
    candidates.push_back(beta);
  }
  if (nk >= 4) {
    // N = 4: solve for (b00, b01, b02, b03).
    Eigen::MatrixXd A(np, 4);
    A.col(0) = L.col(product_index(0, 0));
    A.col(1) = L.col(product_index(0, 1));
    A.col(2) = L.col(product_index(0, 2));
    A.col(3) = L.col(product_index(0, 3));
    const Eigen::VectorXd x = solve_ls(A, prob.rho);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(nk);
    beta(0) = std::sqrt(std::abs(x(0)));
    if (beta(0) > 1e-12) {
      beta(1) = x(1) / beta(0);
      beta(2) = x(2) / beta(0);
      beta(3) = x(3) / beta(0);
    }
    candidates.push_back(beta);

    // Gauss-Newton on the small n = 4 kernel is basin-sensitive; add
    // per-axis scales and sign-pattern restarts of the magnitudes above.
    for (int k = 1; k < nk; ++k) {
      const double denom = L.col(product_index(k, k)).squaredNorm();
      const double b2 = denom > 0.0 ? L.col(product_index(k, k)).dot(prob.rho) / denom : 0.0;
      Eigen::VectorXd axis = Eigen::VectorXd::Zero(nk);
      axis(k) = std::sqrt(std::max(b2, 0.0));
      candidates.push_back(axis);
    }
    const Eigen::VectorXd mag = candidates[candidates.size() - nk].cwiseAbs();
    for (int pattern = 1; pattern < (1 << (nk - 1)); ++pattern) {
      Eigen::VectorXd beta_p = mag;
      for (int k = 1; k < nk; ++k)
        if (pattern & (1 << (k - 1))) beta_p(k) = -beta_p(k);
      candidates.push_back(beta_p);
    }
  }

  Pose best;
  double best_rmse = std::numeric_limits<double>::infinity();
  for (auto& beta : candidates) {
    gauss_newton_betas(L, prob.rho, beta);
    if (!beta.allFinite()) continue;
    const Pose pose = pose_from_betas(prob, corrs, beta);
    const double rmse = candidate_rmse(pose, corrs, intr);
    if (rmse < best_rmse) {
      best_rmse = rmse;
      best = pose;
    }
  }
  if (!std::isfinite(best_rmse))
    fail(Errc::degenerate_configuration, "no EPnP candidate produced a finite pose");
  return best;
}

double reprojection_rmse(const Pose& pose, const std::vector<Correspondence>& corrs,
                         const CameraIntrinsics& intr) {
  double sum = 0.0;
  int m = 0;
  for (const auto& c : corrs) {
    const Vec3 pc = pose.to_camera(c.point);
    if (pc.z() <= kMinDepth) continue;
    const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
    sum += (px - c.pixel).squaredNorm();
    ++m;
  }
  if (m == 0) fail(Errc::all_behind_camera, "no correspondence has positive depth");
  return std::sqrt(sum / m);
}

Eigen::MatrixXd reprojection_jacobian(const Pose& pose, const std::vector<Correspondence>& corrs,
                                      const CameraIntrinsics& intr) {
  std::vector<int> front;
  for (int i = 0; i < static_cast<int>(corrs.size()); ++i)
    if (pose.to_camera(corrs[i].point).z() > kMinDepth) front.push_back(i);
  Eigen::MatrixXd J(2 * front.size(), 6);
  const Mat3 Rt = pose.R.transpose();
  for (std::size_t r = 0; r < front.size(); ++r) {
    const Vec3& p = corrs[front[r]].point;
    const Vec3 pc = pose.to_camera(p);
    // d(p_cam)/d(increment): increment is a left-multiplied (axis-angle, translation).
    Eigen::Matrix<double, 3, 6> dpc;
    dpc.block<3, 3>(0, 0) = Rt * skew(p);
    dpc.block<3, 3>(0, 3) = -Rt;
    Eigen::Matrix<double, 2, 3> dpx;
    const double iz = 1.0 / pc.z();
    dpx << intr.fx * iz, 0.0, -intr.fx * pc.x() * iz * iz,
           0.0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
    J.block<2, 6>(2 * r, 0) = dpx * dpc;
  }
  return J;
}

RefineResult refine_pose(const Pose& initial, const std::vector<Correspondence>& corrs,
                         const CameraIntrinsics& intr, const PnPConfig& cfg) {
  auto front_count = [&](const Pose& pose) {
    int m = 0;
    for (const auto& c : corrs)
      if (pose.to_camera(c.point).z() > kMinDepth) ++m;
    return m;
  };
  if (front_count(initial) == 0)
    fail(Errc::diverged_behind_camera, "all points behind camera at the initial pose");

  RefineResult out;
  out.pose = initial;
  out.rmse_px = reprojection_rmse(initial, corrs, intr);
  out.rmse_trace.push_back(out.rmse_px);

  double lambda = 1e-3;
  for (int iter = 0; iter < cfg.refine_max_iterations; ++iter) {
    // Residuals and Jacobian over points currently in front of the camera.
    std::vector<int> front;
    for (int i = 0; i < static_cast<int>(corrs.size()); ++i)
      if (out.pose.to_camera(corrs[i].point).z() > kMinDepth) front.push_back(i);
    if (front.empty()) fail(Errc::diverged_behind_camera, "all points behind camera");

    Eigen::VectorXd r(2 * front.size());
    for (std::size_t k = 0; k < front.size(); ++k) {
      const auto& c = corrs[front[k]];
      const Vec3 pc = out.pose.to_camera(c.point);
      const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
      r.segment<2>(2 * k) = px - c.pixel;
    }
    const Eigen::MatrixXd J = reprojection_jacobian(out.pose, corrs, intr);
    const Eigen::Matrix<double, 6, 6> H = J.transpose() * J;
    const Eigen::Matrix<double, 6, 1> g = J.transpose() * r;

    bool accepted = false;
    while (lambda <= 1e12) {
      Eigen::Matrix<double, 6, 6> A = H;
      for (int d = 0; d < 6; ++d) A(d, d) += lambda * std::max(H(d, d), 1e-12);
      const Eigen::Matrix<double, 6, 1> delta = A.ldlt().solve(-g);
      if (delta.allFinite()) {
        Pose step;
        step.R = rotation_exp(delta.head<3>());
        step.t = delta.tail<3>();
        const Pose cand = compose(step, out.pose);
        if (front_count(cand) > 0) {
          const double cand_rmse = reprojection_rmse(cand, corrs, intr);
          if (cand_rmse <= out.rmse_px) {
            const double improvement = out.rmse_px - cand_rmse;
            out.pose = cand;
            out.rmse_px = cand_rmse;
            out.rmse_trace.push_back(cand_rmse);
            out.iterations = iter + 1;
            lambda = std::max(lambda * 0.1, 1e-12);
            accepted = true;
            if (improvement < cfg.refine_convergence_px) out.converged = true;
            break;
          }
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // damping exhausted: local minimum
    if (out.converged) break;
  }
  return out;
}

PnPResult ransac_pnp(const std::vector<Correspondence>& corrs, const CameraIntrinsics& intr,
                     const PnPConfig& cfg) {
  const int n = static_cast<int>(corrs.size());
  const int needed = std::max(6, cfg.min_inliers);
  if (n < needed)
    fail(Errc::insufficient_correspondences, "RANSAC needs at least max(6, min_inliers) points");

  constexpr int kSampleSize = 6;
  Rng rng(cfg.seed);
  std::vector<int> idx(n);

  auto evaluate_mask = [&](const Pose& pose, std::vector<std::uint8_t>& mask) {
    int count = 0;
    mask.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      const Vec3 pc = pose.to_camera(corrs[i].point);
      if (pc.z() <= kMinDepth) continue;
      const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
      if ((px - corrs[i].pixel).norm() < cfg.inlier_threshold_px) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  // Hypotheses are pre-generated from the seed so scoring order cannot
  // change the result; ties go to the lowest hypothesis index.
  std::vector<std::array<int, kSampleSize>> samples(cfg.ransac_iterations);
  for (auto& s : samples) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < kSampleSize; ++k) {
      const std::size_t j = k + rng.uniform_index(n - k);
      std::swap(idx[k], idx[j]);
      s[k] = idx[k];
    }
  }

  int best_count = -1;
  Pose best_pose;
  std::vector<std::uint8_t> mask;
  std::vector<Correspondence> sample(kSampleSize);
  for (const auto& s : samples) {
    for (int k = 0; k < kSampleSize; ++k) sample[k] = corrs[s[k]];
    Pose pose;
    try {
      pose = epnp_solve(sample, intr);
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    const int count = evaluate_mask(pose, mask);
    if (count > best_count) {
      best_count = count;
      best_pose = pose;
    }
  }
  if (best_count < cfg.min_inliers) fail(Errc::no_consensus, "best consensus below min_inliers");

  evaluate_mask(best_pose, mask);
  std::vector<Correspondence> inliers;
  inliers.reserve(best_count);
  for (int i = 0; i < n; ++i)
    if (mask[i]) inliers.push_back(corrs[i]);

  Pose refined = best_pose;
  try {
    refined = refine_pose(best_pose, inliers, intr, cfg).pose;
  } catch (const Error&) {
    refined = best_pose;
  }

  PnPResult result;
  result.pose = refined;
  result.inlier_count = evaluate_mask(refined, result.inlier_mask);
  if (result.inlier_count < cfg.min_inliers)
    fail(Errc::no_consensus, "inlier count fell below min_inliers after refinement");
  std::vector<Correspondence> final_inliers;
  for (int i = 0; i < n; ++i)
    if (result.inlier_mask[i]) final_inliers.push_back(corrs[i]);
  result.rmse_px = reprojection_rmse(refined, final_inliers, intr);
  return result;
}

}  // namespace gaze3d
