#include "nadamw/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace nadamw {

namespace {

void check_finite(std::span<const double> x, const char* who) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]))
      throw std::invalid_argument(std::string(who) + ": coordinate " + std::to_string(i) +
                                  " of x is not finite");
}

void check_dim(std::span<const double> x, std::size_t d, const char* who) {
  if (x.size() != d)
    throw std::invalid_argument(std::string(who) + ": x has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(d));
}

class IidSampler final : public GradSampler {
 public:
  explicit IidSampler(const Problem& p) : problem_(p) {}
  void sample(std::span<const double> x, Rng& rng, std::span<double> out) override {
    problem_.stoch_grad(x, rng, out);
  }

 private:
  const Problem& problem_;
};

class Toy1D final : public Problem {
 public:
  explicit Toy1D(const Toy1DParams& params) : params_(params) {
    if (!std::isfinite(params_.x_star)) throw std::invalid_argument("Toy1D: x_star must be finite");
    if (!(params_.p > 0.0 && params_.p < 1.0))
      throw std::invalid_argument("Toy1D: p must lie in (0, 1)");
  }

  std::size_t dim() const override { return 1; }
  const char* kind_name() const override { return "toy1d"; }

  double full_loss(std::span<const double> x) const override {
    check_dim(x, 1, "Toy1D::full_loss");
    check_finite(x, "Toy1D::full_loss");
    const double u = x[0] - params_.x_star;
    return u * u / 200.0;
  }

  void full_grad(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, 1, "Toy1D::full_grad");
    check_dim(out, 1, "Toy1D::full_grad(out)");
    check_finite(x, "Toy1D::full_grad");
    out[0] = (x[0] - params_.x_star) / 100.0;
  }

  void stoch_grad(std::span<const double> x, Rng& rng, std::span<double> out) const override {
    check_dim(x, 1, "Toy1D::stoch_grad");
    check_dim(out, 1, "Toy1D::stoch_grad(out)");
    check_finite(x, "Toy1D::stoch_grad");
    const double u = x[0] - params_.x_star;
    out[0] = rng.bernoulli(params_.p) ? u - 1.0 : -(u - 10.0 / 9.0) / 10.0;
  }

  ProblemConstants constants() const override {
    ProblemConstants c;
    c.L = 0.01;
    c.f_star = 0.0;
    c.sigma = {0.0};
    c.sigma_s_sq = 0.0;
    c.sigma_l1 = 0.0;
    c.sigma_state_dependent = true;
    return c;
  }

  void noise_var_at(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, 1, "Toy1D::noise_var_at");
    check_dim(out, 1, "Toy1D::noise_var_at(out)");
    check_finite(x, "Toy1D::noise_var_at");
    const double u = x[0] - params_.x_star;
    const double a = u - 1.0;
    const double b = -(u - 10.0 / 9.0) / 10.0;
    const double mean_sq = params_.p * a * a + (1.0 - params_.p) * b * b;
    const double mean = params_.p * a + (1.0 - params_.p) * b;
    out[0] = mean_sq - mean * mean;
  }

 private:
  Toy1DParams params_;
};

class NoisyQuadratic final : public Problem {
 public:
  explicit NoisyQuadratic(NoisyQuadraticParams params) : p_(std::move(params)) {
    const std::size_t d = p_.curvatures.size();
    if (d == 0) throw std::invalid_argument("NoisyQuadratic: curvatures must be nonempty");
    if (p_.x_star.size() != d || p_.sigma.size() != d)
      throw std::invalid_argument("NoisyQuadratic: curvatures, x_star, sigma must share a length");
    for (double c : p_.curvatures)
      if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("NoisyQuadratic: curvatures must be positive and finite");
    for (double s : p_.sigma)
      if (!(s >= 0.0) || !std::isfinite(s))
        throw std::invalid_argument("NoisyQuadratic: sigma must be nonnegative and finite");
    check_finite(p_.x_star, "NoisyQuadratic(x_star)");
  }

  std::size_t dim() const override { return p_.curvatures.size(); }
  const char* kind_name() const override { return "noisy_quadratic"; }

  double full_loss(std::span<const double> x) const override {
    check_dim(x, dim(), "NoisyQuadratic::full_loss");
    check_finite(x, "NoisyQuadratic::full_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = x[i] - p_.x_star[i];
      acc += 0.5 * p_.curvatures[i] * u * u;
    }
    return acc;
  }

  void full_grad(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, dim(), "NoisyQuadratic::full_grad");
    check_dim(out, dim(), "NoisyQuadratic::full_grad(out)");
    check_finite(x, "NoisyQuadratic::full_grad");
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = p_.curvatures[i] * (x[i] - p_.x_star[i]);
  }

  void stoch_grad(std::span<const double> x, Rng& rng, std::span<double> out) const override {
    full_grad(x, out);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double s = p_.sigma[i];
      if (s > 0.0) out[i] += s * rng.normal();
    }
  }

  ProblemConstants constants() const override {
    ProblemConstants c;
    c.L = *std::max_element(p_.curvatures.begin(), p_.curvatures.end());
    c.f_star = 0.0;
    c.sigma = p_.sigma;
    for (double s : p_.sigma) {
      c.sigma_s_sq += s * s;
      c.sigma_l1 += s;
    }
    return c;
  }

  void noise_var_at(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, dim(), "NoisyQuadratic::noise_var_at");
    check_dim(out, dim(), "NoisyQuadratic::noise_var_at(out)");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p_.sigma[i] * p_.sigma[i];
  }

 private:
  NoisyQuadraticParams p_;
};

class FiniteSumQuadratic final : public Problem {
 public:
  explicit FiniteSumQuadratic(FiniteSumQuadraticParams params) : p_(std::move(params)) {
    const std::size_t d = p_.curvatures.size();
    const std::size_t n = p_.shifts.size();
    if (d == 0) throw std::invalid_argument("FiniteSumQuadratic: curvatures must be nonempty");
    if (n == 0) throw std::invalid_argument("FiniteSumQuadratic: shifts must be nonempty");
    if (p_.batch < 1 || p_.batch > n)
      throw std::invalid_argument("FiniteSumQuadratic: batch must lie in [1, n]");
    for (double c : p_.curvatures)
      if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("FiniteSumQuadratic: curvatures must be positive and finite");
    mean_shift_.assign(d, 0.0);
    shift_var_.assign(d, 0.0);
    for (const auto& b : p_.shifts) {
      if (b.size() != d)
        throw std::invalid_argument("FiniteSumQuadratic: every shift must have length d");
      check_finite(b, "FiniteSumQuadratic(shift)");
      for (std::size_t i = 0; i < d; ++i) mean_shift_[i] += b[i];
    }
    for (std::size_t i = 0; i < d; ++i) mean_shift_[i] /= static_cast<double>(n);
    for (const auto& b : p_.shifts)
      for (std::size_t i = 0; i < d; ++i) {
        const double u = b[i] - mean_shift_[i];
        shift_var_[i] += u * u;
      }
    for (std::size_t i = 0; i < d; ++i) shift_var_[i] /= static_cast<double>(n);
  }

  std::size_t dim() const override { return p_.curvatures.size(); }
  const char* kind_name() const override { return "finite_sum_quadratic"; }

  double full_loss(std::span<const double> x) const override {
    check_dim(x, dim(), "FiniteSumQuadratic::full_loss");
    check_finite(x, "FiniteSumQuadratic::full_loss");
    double acc = 0.0;
    for (const auto& b : p_.shifts)
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = x[i] - b[i];
        acc += 0.5 * p_.curvatures[i] * u * u;
      }
    return acc / static_cast<double>(p_.shifts.size());
  }

  void full_grad(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, dim(), "FiniteSumQuadratic::full_grad");
    check_dim(out, dim(), "FiniteSumQuadratic::full_grad(out)");
    check_finite(x, "FiniteSumQuadratic::full_grad");
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = p_.curvatures[i] * (x[i] - mean_shift_[i]);
  }

  void sample_grad(std::span<const double> x, std::span<const std::size_t> idx,
                   std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.0;
    for (std::size_t j : idx)
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += p_.curvatures[i] * (x[i] - p_.shifts[j][i]);
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  }

  void stoch_grad(std::span<const double> x, Rng& rng, std::span<double> out) const override {
    check_dim(x, dim(), "FiniteSumQuadratic::stoch_grad");
    check_dim(out, dim(), "FiniteSumQuadratic::stoch_grad(out)");
    check_finite(x, "FiniteSumQuadratic::stoch_grad");
    std::vector<std::size_t> idx(p_.batch);
    for (auto& j : idx) j = static_cast<std::size_t>(rng.below(p_.shifts.size()));
    sample_grad(x, idx, out);
  }

  ProblemConstants constants() const override {
    ProblemConstants c;
    c.L = *std::max_element(p_.curvatures.begin(), p_.curvatures.end());
    std::vector<double> xstar = mean_shift_;
    c.f_star = full_loss(xstar);
    c.sigma.resize(dim());
    const double inv_b = 1.0 / static_cast<double>(p_.batch);
    for (std::size_t i = 0; i < c.sigma.size(); ++i) {
      c.sigma[i] = p_.curvatures[i] * std::sqrt(shift_var_[i] * inv_b);
      c.sigma_s_sq += c.sigma[i] * c.sigma[i];
      c.sigma_l1 += c.sigma[i];
    }
    return c;
  }

  void noise_var_at(std::span<const double> x, std::span<double> out) const override {
    check_dim(x, dim(), "FiniteSumQuadratic::noise_var_at");
    check_dim(out, dim(), "FiniteSumQuadratic::noise_var_at(out)");
    const double inv_b = 1.0 / static_cast<double>(p_.batch);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double c = p_.curvatures[i];
      out[i] = c * c * shift_var_[i] * inv_b;
    }
  }

  std::unique_ptr<GradSampler> make_sampler() const override;

  std::size_t sample_count() const { return p_.shifts.size(); }
  std::size_t batch() const { return p_.batch; }

 private:
  FiniteSumQuadraticParams p_;
  std::vector<double> mean_shift_;
  std::vector<double> shift_var_;
};

class EpochShuffleSampler final : public GradSampler {
 public:
  explicit EpochShuffleSampler(const FiniteSumQuadratic& p)
      : problem_(p), order_(p.sample_count()), cursor_(p.sample_count()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  void sample(std::span<const double> x, Rng& rng, std::span<double> out) override {
    const std::size_t b = problem_.batch();
    if (cursor_ + b > order_.size()) {
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng.below(i))]);
      cursor_ = 0;
    }
    problem_.sample_grad(x, std::span<const std::size_t>(order_).subspan(cursor_, b), out);
    cursor_ += b;
  }

 private:
  const FiniteSumQuadratic& problem_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

std::unique_ptr<GradSampler> FiniteSumQuadratic::make_sampler() const {
  return std::make_unique<EpochShuffleSampler>(*this);
}

}  // namespace

double Problem::noise_sq_at(std::span<const double> x) const {
  std::vector<double> var(dim());
  noise_var_at(x, var);
  double acc = 0.0;
  for (double v : var) acc += v;
  return acc;
}

std::unique_ptr<GradSampler> Problem::make_sampler() const {
  return std::make_unique<IidSampler>(*this);
}

std::vector<double> Problem::full_grad(std::span<const double> x) const {
  std::vector<double> g(dim());
  full_grad(x, g);
  return g;
}

std::vector<double> Problem::stoch_grad(std::span<const double> x, Rng& rng) const {
  std::vector<double> g(dim());
  stoch_grad(x, rng, g);
  return g;
}

std::unique_ptr<Problem> make_toy1d(const Toy1DParams& params) {
  return std::make_unique<Toy1D>(params);
}

std::unique_ptr<Problem> make_noisy_quadratic(NoisyQuadraticParams params) {
  return std::make_unique<NoisyQuadratic>(std::move(params));
}

std::unique_ptr<Problem> make_finite_sum_quadratic(FiniteSumQuadraticParams params) {
  return std::make_unique<FiniteSumQuadratic>(std::move(params));
}

}  // namespace nadamw
