#include "resloss/decomposition.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "resloss/error.hpp"

namespace resloss::decomposition {

namespace {

std::string normalize(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

constexpr double kDegenerateInflation = 1e3;

}  // namespace

std::string to_string(Treatment t) {
  switch (t) {
    case Treatment::Native: return "native";
    case Treatment::BOE: return "BOE";
    case Treatment::LongBOE: return "longBOE";
    case Treatment::Triacid: return "triacid";
  }
  return "unknown";
}

Treatment parse_treatment(const std::string& text) {
  const std::string n = normalize(text);
  if (n == "native") return Treatment::Native;
  if (n == "boe") return Treatment::BOE;
  if (n == "longboe") return Treatment::LongBOE;
  if (n == "triacid") return Treatment::Triacid;
  throw Error(ErrorCode::InvalidInput, "unknown treatment '" + text + "'");
}

std::string to_string(DeviceType t) { return t == DeviceType::CPW ? "CPW" : "LE"; }

DeviceType parse_device_type(const std::string& text) {
  const std::string n = normalize(text);
  if (n == "cpw") return DeviceType::CPW;
  if (n == "le" || n == "lumped" || n == "lumpedelement") return DeviceType::LE;
  throw Error(ErrorCode::InvalidInput, "unknown device type '" + text + "'");
}

void validate(const DeviceGeometry& g) {
  auto check = [&](double p, const char* name) {
    if (!(p > 0.0 && p < 1.0))
      throw Error(ErrorCode::InvalidInput, g.label + ": " + name + " must lie in (0, 1)");
  };
  check(g.p_ms, "p_MS");
  if (g.p_ma) check(*g.p_ma, "p_MA");
  if (g.p_sa) check(*g.p_sa, "p_SA");
}

// ---- participation-ratio scaling -------------------------------------------

Measured SprFit::ratio(Treatment numerator, Treatment denominator) const {
  const auto ia = std::find(order.begin(), order.end(), numerator);
  const auto ib = std::find(order.begin(), order.end(), denominator);
  if (ia == order.end() || ib == order.end())
    throw Error(ErrorCode::InvalidInput, "treatment not present in the fit");
  const auto a = ia - order.begin();
  const auto b = ib - order.begin();
  const double va = tan_surface.at(numerator).value;
  const double vb = tan_surface.at(denominator).value;
  const double r = va / vb;
  // first order: dr = r (da/a - db/b)
  const double var = r * r *
                     (covariance(a, a) / (va * va) + covariance(b, b) / (vb * vb) -
                      2.0 * covariance(a, b) / (va * vb));
  return {r, std::sqrt(std::max(var, 0.0))};
}

SprFit fit_spr_scaling(const std::vector<SprDevice>& devices, double p_bulk) {
  if (!(p_bulk > 0.0) || !std::isfinite(p_bulk))
    throw Error(ErrorCode::InvalidInput, "p_bulk must be positive");
  std::map<Treatment, int> counts;
  for (const auto& d : devices) {
    if (!(d.p_ms > 0.0) || !(d.q > 0.0) || !(d.q_sigma > 0.0) || !std::isfinite(d.q) ||
        !std::isfinite(d.q_sigma))
      throw Error(ErrorCode::InvalidInput, "device '" + d.label + "' needs positive p_MS, Q and sigma");
    ++counts[d.treatment];
  }
  if (counts.size() < 2)
    throw Error(ErrorCode::InsufficientData, "SPR regression needs at least two treatments");
  for (const auto& [t, n] : counts)
    if (n < 3)
      throw Error(ErrorCode::InsufficientData,
                  "treatment " + to_string(t) + " has " + std::to_string(n) + " devices; need 3");

  SprFit fit;
  fit.p_bulk = p_bulk;
  for (const auto& [t, n] : counts) fit.order.push_back(t);
  const int k = static_cast<int>(fit.order.size());
  const int m = static_cast<int>(devices.size());

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, k + 1);
  Eigen::VectorXd y(m);
  for (int j = 0; j < m; ++j) {
    const auto& d = devices[static_cast<std::size_t>(j)];
    const double w = d.q * d.q / d.q_sigma;  // 1 / sigma of 1/Q
    const auto col = std::find(fit.order.begin(), fit.order.end(), d.treatment) - fit.order.begin();
    a(j, col) = d.p_ms * w;
    a(j, k) = w;
    y[j] = w / d.q;
  }
  // Column scaling keeps the normal matrix well conditioned.
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (int c = 0; c <= k; ++c)
    if (scale[c] == 0.0) scale[c] = 1.0;
  const Eigen::MatrixXd as = a * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(as);
  if (qr.rank() < k + 1)
    throw Error(ErrorCode::DegenerateInput, "SPR design matrix is rank deficient");
  const Eigen::VectorXd xs = qr.solve(y);
  const Eigen::VectorXd x = xs.cwiseQuotient(scale);
  const Eigen::MatrixXd info = as.transpose() * as;
  const Eigen::MatrixXd cov_s = info.ldlt().solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
  fit.covariance = scale.cwiseInverse().asDiagonal() * cov_s * scale.cwiseInverse().asDiagonal();

  for (int c = 0; c < k; ++c)
    fit.tan_surface[fit.order[static_cast<std::size_t>(c)]] = {x[c], std::sqrt(fit.covariance(c, c))};
  fit.l_bulk = {x[k], std::sqrt(fit.covariance(k, k))};
  fit.tan_bulk = {x[k] / p_bulk, fit.l_bulk.sigma / p_bulk};
  fit.chi_square = (a * x - y).squaredNorm();
  fit.degrees_of_freedom = m - (k + 1);
  if (std::abs(fit.l_bulk.value) < 2.0 * fit.l_bulk.sigma) {
    fit.bulk_unidentifiable = true;
    fit.diagnostics.push_back("BulkUnidentifiable");
  }
  return fit;
}

// ---- treatment table and pair solutions ------------------------------------

const SurfaceEntry& SurfaceTable::at(Treatment t) const {
  for (const auto& e : entries)
    if (e.treatment == t) return e;
  throw Error(ErrorCode::InvalidInput, "surface table has no " + to_string(t) + " entry");
}

SurfaceEntry& SurfaceTable::at(Treatment t) {
  return const_cast<SurfaceEntry&>(static_cast<const SurfaceTable&>(*this).at(t));
}

SurfaceTable SurfaceTable::with_default_thicknesses() {
  SurfaceTable table;
  table.entries = {
      {Treatment::Native, {0.0, 0.0}, {3.0, 0.0}, 1},
      {Treatment::BOE, {0.0, 0.0}, {2.4, 0.0}, 0},
      {Treatment::LongBOE, {0.0, 0.0}, {1.5, 0.3}, 0},
      {Treatment::Triacid, {0.0, 0.0}, {6.0, 0.0}, 0},
  };
  return table;
}

PairSolution solve_pair(Treatment a, Treatment b, const SurfaceTable& table) {
  if (a == b) throw Error(ErrorCode::InvalidInput, "pair needs two different treatments");
  // Evaluate in a canonical order so swapping the arguments is bitwise neutral.
  const Treatment first = std::min(a, b);
  const Treatment second = std::max(a, b);
  const SurfaceEntry& ea = table.at(first);
  const SurfaceEntry& eb = table.at(second);
  if (ea.hydrocarbon || eb.hydrocarbon)
    throw Error(ErrorCode::InvalidInput, "pair treatments must be hydrocarbon-free");
  const double t0 = table.t0_nm;
  const double ta = ea.thickness_nm.value;
  const double tb = eb.thickness_nm.value;
  const double va = ea.tan_delta.value;
  const double vb = eb.tan_delta.value;
  const double dt = ta - tb;
  if (dt == 0.0)
    throw Error(ErrorCode::DegenerateInput, "pair treatments have identical oxide thickness");

  PairSolution out;
  out.a = a;
  out.b = b;
  const double oxide = t0 * (va - vb) / dt;
  const double substrate = (ta * vb - tb * va) / dt;

  // Jacobians over (tan_a, tan_b, t_a, t_b).
  Eigen::Matrix<double, 2, 4> j;
  j << t0 / dt, -t0 / dt, -t0 * (va - vb) / (dt * dt), t0 * (va - vb) / (dt * dt),
      -tb / dt, ta / dt, tb * (va - vb) / (dt * dt), ta * (vb - va) / (dt * dt);
  const Eigen::Vector4d sig(ea.tan_delta.sigma, eb.tan_delta.sigma, ea.thickness_nm.sigma,
                            eb.thickness_nm.sigma);
  const Eigen::Matrix2d cov = j * sig.cwiseAbs2().asDiagonal() * j.transpose();

  double inflate = 1.0;
  const double thickness_scale = std::hypot(ea.thickness_nm.sigma, eb.thickness_nm.sigma);
  if (std::abs(dt) <= std::max(thickness_scale, 1e-9 * std::max(std::abs(ta), std::abs(tb)))) {
    out.degenerate = true;
    inflate = kDegenerateInflation;
  }
  out.oxide = {oxide, inflate * std::sqrt(cov(0, 0))};
  out.substrate = {substrate, inflate * std::sqrt(cov(1, 1))};
  out.covariance = inflate * inflate * cov(0, 1);
  out.low_precision = out.oxide.sigma >= std::abs(out.oxide.value);
  return out;
}

HydrocarbonSolution solve_hydrocarbon(const SurfaceEntry& native, const Measured& oxide,
                                      const Measured& substrate, double oxide_substrate_cov, double t0_nm) {
  if (!native.hydrocarbon)
    throw Error(ErrorCode::InvalidInput, "hydrocarbon term needs the entry that carries it");
  const double u = native.thickness_nm.value / t0_nm;
  HydrocarbonSolution out;
  out.value.value = native.tan_delta.value - u * oxide.value - substrate.value;
  const double var = native.tan_delta.sigma * native.tan_delta.sigma + u * u * oxide.sigma * oxide.sigma +
                     substrate.sigma * substrate.sigma + 2.0 * u * oxide_substrate_cov +
                     std::pow(oxide.value * native.thickness_nm.sigma / t0_nm, 2);
  out.value.sigma = std::sqrt(std::max(var, 0.0));
  out.unphysical = out.value.value < 0.0;
  return out;
}

HydrocarbonSolution solve_hydrocarbon(const SurfaceEntry& native, const PairSolution& pair, double t0_nm) {
  return solve_hydrocarbon(native, pair.oxide, pair.substrate, pair.covariance, t0_nm);
}

Aggregate weighted_mean(const std::vector<Measured>& values) {
  if (values.empty()) throw Error(ErrorCode::InsufficientData, "weighted mean of nothing");
  Aggregate out;
  out.degrees_of_freedom = static_cast<int>(values.size()) - 1;
  std::vector<Measured> exact;
  for (const auto& v : values)
    if (v.sigma == 0.0) exact.push_back(v);
  if (!exact.empty()) {
    // Exact inputs dominate any finite-variance input.
    double sum = 0.0;
    for (const auto& v : exact) sum += v.value;
    out.value = {sum / static_cast<double>(exact.size()), 0.0};
    for (const auto& v : values)
      if (v.sigma > 0.0) out.chi_square += std::pow((v.value - out.value.value) / v.sigma, 2);
    return out;
  }
  double sw = 0.0, swx = 0.0;
  for (const auto& v : values) {
    const double w = 1.0 / (v.sigma * v.sigma);
    sw += w;
    swx += w * v.value;
  }
  out.value = {swx / sw, 1.0 / std::sqrt(sw)};
  for (const auto& v : values) out.chi_square += std::pow((v.value - out.value.value) / v.sigma, 2);
  return out;
}

Measured rescale_intrinsic(const Measured& ms_referenced, double beta_ma) {
  if (!std::isfinite(beta_ma) || !(beta_ma > 0.0))
    throw Error(ErrorCode::MissingCalibration, "intrinsic rescaling needs a positive participation ratio");
  return {ms_referenced.value / beta_ma, ms_referenced.sigma / beta_ma};
}

Measured unrescale_intrinsic(const Measured& intrinsic, double beta_ma) {
  if (!std::isfinite(beta_ma) || !(beta_ma > 0.0))
    throw Error(ErrorCode::MissingCalibration, "intrinsic rescaling needs a positive participation ratio");
  return {intrinsic.value * beta_ma, intrinsic.sigma * beta_ma};
}

bool participation_identity(double alpha_ms, double beta_ma, double tol) {
  return std::abs(alpha_ms * beta_ma - 1.0) <= tol;
}

DecompositionResult aggregate_triplets(const SurfaceTable& table, std::optional<double> alpha_ms,
                                       std::optional<double> beta_ma) {
  std::vector<Treatment> clean;
  const SurfaceEntry* native = nullptr;
  for (const auto& e : table.entries) {
    if (!(e.thickness_nm.value > 0.0))
      throw Error(ErrorCode::InvalidInput, "oxide thickness must be positive for " + to_string(e.treatment));
    if (e.hydrocarbon)
      native = &e;
    else
      clean.push_back(e.treatment);
  }
  std::sort(clean.begin(), clean.end());
  if (clean.size() < 2) throw Error(ErrorCode::InsufficientData, "need two hydrocarbon-free treatments");

  DecompositionResult out;
  std::vector<Measured> ox, sub, hc;
  for (std::size_t i = 0; i < clean.size(); ++i)
    for (std::size_t k = i + 1; k < clean.size(); ++k) {
      const PairSolution p = solve_pair(clean[i], clean[k], table);
      out.pairs.push_back(p);
      ox.push_back(p.oxide);
      sub.push_back(p.substrate);
      if (native) {
        const auto h = solve_hydrocarbon(*native, p, table.t0_nm);
        out.hydrocarbon_per_pair.push_back(h);
        hc.push_back(h.value);
      }
    }
  out.oxide = weighted_mean(ox);
  out.substrate = weighted_mean(sub);
  if (!hc.empty()) {
    out.hydrocarbon = weighted_mean(hc);
    out.hydrocarbon_unphysical = out.hydrocarbon.value.value < 0.0;
  }

  if (alpha_ms || beta_ma) {
    Intrinsic in;
    in.alpha_ms = alpha_ms ? *alpha_ms : 1.0 / *beta_ma;
    in.beta_ma = beta_ma ? *beta_ma : 1.0 / *alpha_ms;
    in.identity_holds = participation_identity(in.alpha_ms, in.beta_ma, 1e-9);
    in.oxide = rescale_intrinsic(out.oxide.value, in.beta_ma);
    in.hydrocarbon = rescale_intrinsic(out.hydrocarbon.value, in.beta_ma);
    out.intrinsic = in;
  }
  return out;
}

ExcludedModelSolution solve_excluded_model(const SurfaceTable& table) {
  // Unknowns: oxide, substrate, hydrocarbon on MA, hydrocarbon on SA.
  const Treatment rows[] = {Treatment::Native, Treatment::BOE, Treatment::LongBOE, Treatment::Triacid};
  Eigen::Matrix4d a;
  Eigen::Vector4d y;
  for (int r = 0; r < 4; ++r) {
    const SurfaceEntry& e = table.at(rows[r]);
    const double u = e.thickness_nm.value / table.t0_nm;
    const double ma = rows[r] == Treatment::Native ? 1.0 : 0.0;
    const double sa = rows[r] == Treatment::Triacid ? 0.0 : 1.0;
    a.row(r) << u, 1.0, ma, sa;
    y[r] = e.tan_delta.value;
  }
  Eigen::FullPivLU<Eigen::Matrix4d> lu(a);
  if (!lu.isInvertible())
    throw Error(ErrorCode::DegenerateInput, "alternative placement system is singular");
  const Eigen::Vector4d x = lu.solve(y);
  ExcludedModelSolution out{x[0], x[1], x[2], x[3], false};
  out.unphysical = (x.array() < 0.0).any();
  return out;
}

double q_tls_at_photon(const lossmodel::LossParams& params, double omega, double temperature_k, double nbar) {
  return lossmodel::q_tls(params, nbar, temperature_k, omega);
}

LinearPrediction extrapolate_oxide_thickness(const std::vector<std::pair<double, double>>& points,
                                             double x_query) {
  if (points.size() < 2)
    throw Error(ErrorCode::DegenerateInput, "thickness calibration needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::DegenerateInput, "calibration points share one x value");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (const auto& [x, y] : points) rss += std::pow(y - (intercept + slope * x), 2);
  const double s2 = points.size() > 2 ? rss / (n - 2.0) : 0.0;

  LinearPrediction out;
  out.slope = {slope, std::sqrt(s2 / sxx)};
  out.intercept = {intercept, std::sqrt(s2 * (1.0 / n + mx * mx / sxx))};
  out.value = {intercept + slope * x_query,
               std::sqrt(s2 * (1.0 / n + (x_query - mx) * (x_query - mx) / sxx))};
  return out;
}

}  // namespace resloss::decomposition
