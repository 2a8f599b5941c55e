#include "optex/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "optex/errors.hpp"

namespace optex {

EstimationTask EstimationTask::defaults(Param target) {
  EstimationTask t;
  t.target = target;
  if (target == Param::kp) {
    t.nominal = 2.43e-9;
    t.lo = 3e-12;
    t.hi = 2.4e-9;
  } else {
    t.nominal = 1.85e-9;
    t.lo = 2e-11;
    t.hi = 1e-8;
  }
  // The k_p nominal value sits just above its start range, so the optimizer
  // searches a wider box than the starts cover.
  t.search_lo = t.lo / 3.0;
  t.search_hi = t.hi * 3.0;
  return t;
}

void EstimationTask::validate() const {
  if (!(lo > 0.0 && lo < hi)) throw ConfigError("estimation: need 0 < lo < hi");
  if (!(search_lo > 0.0 && search_lo <= lo && search_hi >= hi))
    throw ConfigError("estimation: search bounds must contain the start range");
  if (!(nominal >= search_lo && nominal <= search_hi))
    throw ConfigError("estimation: nominal value outside the search bounds");
  if (n_starts < 1) throw ConfigError("estimation: n_starts must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("estimation: noise_sigma must be >= 0");
  if (!(optimizer.ftol > 0.0 && optimizer.xtol > 0.0 && optimizer.max_evaluations > 3))
    throw ConfigError("estimation: invalid optimizer settings");
  profile.validate();
}

std::vector<double> generate_starts(const EstimationTask& task) {
  if (task.n_starts == 1) return {0.5 * (task.lo + task.hi)};
  std::vector<double> s(task.n_starts);
  const double step = (task.hi - task.lo) / static_cast<double>(task.n_starts - 1);
  for (std::size_t i = 0; i < task.n_starts; ++i) s[i] = task.lo + step * static_cast<double>(i);
  s.back() = task.hi;
  return s;
}

std::vector<double> synthesize_voltage(const ExcitationProfile& profile, double soc0, const CellParameters& params,
                                       double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw DomainError("noise_sigma must be >= 0");
  const CellModel model(params);
  auto v = model.simulate(profile, soc0).voltage;
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& x : v) x += noise(rng);
  }
  return v;
}

LeastSquaresProblem::LeastSquaresProblem(const CellParameters& params, const ExcitationProfile& profile, double soc0,
                                         Param target, std::vector<double> data)
    : params_(params), profile_(profile), target_(target), data_(std::move(data)) {
  if (data_.size() != profile_.currents.size())
    throw DomainError("estimation: data length " + std::to_string(data_.size()) + " != profile length " +
                      std::to_string(profile_.currents.size()));
  const CellModel model(params_);
  auto sim = model.simulate(profile_, soc0);
  fi_raw_ = fisher_information(analytic_sensitivity(model, sim, profile_, target_), params_.sigma_y).fi_raw;
  states_ = std::move(sim.states);
}

double LeastSquaresProblem::cost(double theta) const {
  ++evaluations_;
  CellParameters p = params_;
  p.set_rate_constant(target_, theta);
  const CellModel model(p);
  double sum = 0.0;
  for (std::size_t k = 0; k < states_.size(); ++k) {
    const double r = model.terminal_voltage(states_[k], profile_.currents[k], profile_.temperature) - data_[k];
    sum += r * r;
  }
  return sum;
}

namespace {

constexpr double kGolden = 0.3819660112501051;

struct Point {
  double u;
  double f;
};

class Search {
 public:
  Search(const LeastSquaresProblem& problem, const OptimizerSettings& s, double lo, double hi)
      : problem_(problem), s_(s), lo_(std::log(lo)), hi_(std::log(hi)) {}

  Point eval(double u) {
    u = std::clamp(u, lo_, hi_);
    ++evals_;
    Point p{u, problem_.cost(std::exp(u))};
    if (p.f < best_.f) best_ = p;
    return p;
  }

  bool budget_left() const { return evals_ < s_.max_evaluations; }
  int evaluations() const { return evals_; }
  const Point& best() const { return best_; }

  // Returns true when a tolerance was met before the evaluation budget ran out.
  bool run(double u0) {
    const double h = 0.05;
    const Point x0 = eval(u0);
    const Point up = x0.u < hi_ ? eval(x0.u + h) : x0;
    double dir = 1.0;
    Point b = up;
    if (!(up.u != x0.u && up.f < x0.f)) {
      const Point dn = x0.u > lo_ ? eval(x0.u - h) : x0;
      if (dn.u != x0.u && dn.f < x0.f) {
        dir = -1.0;
        b = dn;
      } else if (up.u != x0.u && dn.u != x0.u) {
        return refine(dn, x0, up);
      } else {
        // x0 sits on a bound and its only neighbour is uphill.
        return shrink_to_bound(up.u != x0.u ? up : dn, x0);
      }
    }
    // Expand downhill until the cost rises or a bound stops us.
    Point a = x0;
    while (budget_left()) {
      const double bound = dir > 0 ? hi_ : lo_;
      if (b.u == bound) return shrink_to_bound(a, b);
      const Point c = eval(b.u + 1.618 * (b.u - a.u));
      if (c.f >= b.f) return dir > 0 ? refine(a, b, c) : refine(c, b, a);
      a = b;
      b = c;
    }
    return false;
  }

 private:
  // Minimum appears to lie at (or next to) a bound: cost still falls toward it.
  bool shrink_to_bound(Point a, Point c) {
    while (budget_left()) {
      if (std::abs(c.u - a.u) < s_.xtol || a.f - c.f < s_.ftol) return true;
      Point m = eval(c.u + kGolden * (a.u - c.u));
      if (m.f <= c.f) return c.u > a.u ? refine(a, m, c) : refine(c, m, a);
      a = m;
    }
    return false;
  }

  // Bracket a.u < b.u < c.u with f(b) <= f(a), f(c).
  bool refine(Point a, Point b, Point c) {
    double width_two_ago = c.u - a.u, width_prev = width_two_ago;
    while (budget_left()) {
      if (a.f - b.f < s_.ftol && c.f - b.f < s_.ftol) return true;
      if (c.u - a.u < s_.xtol) return true;
      double x = std::nan("");
      const bool stalled = (c.u - a.u) > 0.5 * width_two_ago;
      if (!stalled) {
        const double r = (b.u - a.u) * (b.f - c.f);
        const double q = (b.u - c.u) * (b.f - a.f);
        const double den = 2.0 * (r - q);
        if (den != 0.0) x = b.u - ((b.u - a.u) * r - (b.u - c.u) * q) / den;
      }
      const double guard = 1e-3 * (c.u - a.u);
      if (!std::isfinite(x) || x <= a.u + guard || x >= c.u - guard || std::abs(x - b.u) < guard) {
        x = (c.u - b.u > b.u - a.u) ? b.u + kGolden * (c.u - b.u) : b.u - kGolden * (b.u - a.u);
      }
      width_two_ago = width_prev;
      width_prev = c.u - a.u;
      const Point p = eval(x);
      if (p.u < b.u) {
        if (p.f <= b.f) {
          c = b;
          b = p;
        } else {
          a = p;
        }
      } else {
        if (p.f <= b.f) {
          a = b;
          b = p;
        } else {
          c = p;
        }
      }
    }
    return false;
  }

  const LeastSquaresProblem& problem_;
  const OptimizerSettings& s_;
  double lo_, hi_;
  int evals_ = 0;
  Point best_{0.0, std::numeric_limits<double>::infinity()};
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

StartResult estimate(const EstimationTask& task, const LeastSquaresProblem& problem, double start) {
  StartResult r;
  r.initial = start;
  r.start_cost = problem.cost(start);
  if (problem.fi_raw() == 0.0) {
    // The voltage does not depend on the parameter along this profile.
    r.identifiable = false;
    r.estimate = start;
    r.cost = r.start_cost;
    r.abs_pct_error = 100.0 * std::abs(start - task.nominal) / task.nominal;
    return r;
  }
  Search search(problem, task.optimizer, task.search_lo, task.search_hi);
  r.converged = search.run(std::log(std::clamp(start, task.search_lo, task.search_hi)));
  r.evaluations = search.evaluations();
  r.estimate = std::exp(search.best().u);
  r.cost = search.best().f;
  if (r.cost > r.start_cost) {  // clamping can move the first point; never report worse than the start
    r.estimate = start;
    r.cost = r.start_cost;
  }
  r.abs_pct_error = 100.0 * std::abs(r.estimate - task.nominal) / task.nominal;
  return r;
}

EstimationResult run_task(const EstimationTask& task, const CellParameters& params) {
  task.validate();
  CellParameters truth = params;
  truth.set_rate_constant(task.target, task.nominal);
  return run_task(task, params, synthesize_voltage(task.profile, task.soc0, truth, task.noise_sigma, task.seed));
}

EstimationResult run_task(const EstimationTask& task, const CellParameters& params, const std::vector<double>& data) {
  task.validate();
  CellParameters p = params;
  p.set_rate_constant(task.target, task.nominal);
  const LeastSquaresProblem problem(p, task.profile, task.soc0, task.target, data);
  EstimationResult res;
  res.target = task.target;
  std::vector<double> errors;
  for (double s : generate_starts(task)) {
    auto r = estimate(task, problem, s);
    if (r.identifiable && r.converged) {
      errors.push_back(r.abs_pct_error);
    } else if (r.identifiable) {
      res.warnings.push_back("start " + std::to_string(s) + " hit the evaluation limit; excluded from statistics");
    }
    res.starts.push_back(r);
  }
  res.identifiable = problem.fi_raw() > 0.0;
  if (!res.identifiable) res.warnings.push_back(std::string("profile carries no information on ") + to_string(task.target));
  res.n_used = errors.size();
  if (!errors.empty()) {
    res.median = quantile(errors, 0.5);
    res.q1 = quantile(errors, 0.25);
    res.q3 = quantile(errors, 0.75);
    res.min = *std::min_element(errors.begin(), errors.end());
    res.max = *std::max_element(errors.begin(), errors.end());
  }
  return res;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      x.push_back(a[i]);
      y.push_back(b[i]);
    }
  }
  if (x.size() < 2) return std::nan("");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

ComparisonTable run_comparison(const std::vector<ComparisonInput>& inputs, const CellParameters& params,
                               const OptimizerSettings& optimizer) {
  ComparisonTable t;
  const CellModel model(params);
  for (const auto& in : inputs) {
    ComparisonRow row;
    row.label = in.label;
    row.length_s = in.profile.duration();
    row.temperature = in.profile.temperature;
    row.mean_step_time_s = in.mean_step_time_s;
    const auto sim = model.simulate(in.profile, in.soc0);
    row.fi_raw_kp = fisher_information(analytic_sensitivity(model, sim, in.profile, Param::kp), params.sigma_y).fi_raw;
    row.fi_raw_kn = fisher_information(analytic_sensitivity(model, sim, in.profile, Param::kn), params.sigma_y).fi_raw;
    for (Param p : {Param::kp, Param::kn}) {
      auto task = EstimationTask::defaults(p);
      task.profile = in.profile;
      task.soc0 = in.soc0;
      task.optimizer = optimizer;
      const auto res = run_task(task, params);
      (p == Param::kp ? row.median_error_kp : row.median_error_kn) = res.median;
    }
    t.rows.push_back(row);
  }
  std::vector<double> fp, fn, ep, en;
  for (const auto& r : t.rows) {
    fp.push_back(r.fi_raw_kp);
    fn.push_back(r.fi_raw_kn);
    ep.push_back(r.median_error_kp);
    en.push_back(r.median_error_kn);
  }
  t.spearman_kp = spearman(fp, ep);
  t.spearman_kn = spearman(fn, en);
  return t;
}

std::string render_table(const ComparisonTable& table) {
  std::ostringstream os;
  auto num = [](double v, int prec, bool sci) {
    std::ostringstream s;
    if (!std::isfinite(v)) return std::string("n/a");
    s << (sci ? std::scientific : std::fixed) << std::setprecision(prec) << v;
    return s.str();
  };
  os << std::left << std::setw(18) << "method" << std::right << std::setw(10) << "length_s" << std::setw(8) << "T_C"
     << std::setw(13) << "fi_raw_kp" << std::setw(13) << "fi_raw_kn" << std::setw(12) << "err_kp_%" << std::setw(12)
     << "err_kn_%" << std::setw(14) << "step_time_s" << '\n';
  for (const auto& r : table.rows) {
    os << std::left << std::setw(18) << r.label << std::right << std::setw(10) << num(r.length_s, 0, false)
       << std::setw(8) << num(r.temperature - 273.15, 1, false) << std::setw(13) << num(r.fi_raw_kp, 3, true)
       << std::setw(13) << num(r.fi_raw_kn, 3, true) << std::setw(12) << num(r.median_error_kp, 3, false)
       << std::setw(12) << num(r.median_error_kn, 3, false) << std::setw(14) << num(r.mean_step_time_s, 3, true)
       << '\n';
  }
  os << "spearman(fi, error): kp " << num(table.spearman_kp, 3, false) << ", kn " << num(table.spearman_kn, 3, false)
     << '\n';
  return os.str();
}

}  // namespace optex
