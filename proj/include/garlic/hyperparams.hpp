#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "garlic/errors.hpp"

namespace garlic {

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Which points define the initial scale of each Gaussian.
enum class InitNeighbors : std::uint32_t { Centers = 0, Data = 1 };
/// Outer bound of the clone shell: e*tau, or (1+e)*tau.
enum class ShellBound : std::uint32_t { Scaled = 0, OnePlus = 1 };
enum class Optimizer : std::uint32_t { Sgd = 0, Momentum = 1, Adam = 2 };
enum class Normalization : std::uint32_t { PerDimension = 0, Global = 1, None = 2 };

namespace detail {
template <typename E, std::size_t N>
struct EnumNames {
  std::array<std::pair<E, std::string_view>, N> names;

  std::string_view to_string(E e) const {
    for (const auto& [v, s] : names)
      if (v == e) return s;
    return "?";
  }
  bool parse(std::string_view text, E& out) const {
    for (const auto& [v, s] : names)
      if (s == text) {
        out = v;
        return true;
      }
    return false;
  }
};

inline constexpr EnumNames<InitNeighbors, 2> kInitNeighborsNames{
    {{{InitNeighbors::Centers, "centers"}, {InitNeighbors::Data, "data"}}}};
inline constexpr EnumNames<ShellBound, 2> kShellBoundNames{
    {{{ShellBound::Scaled, "scaled"}, {ShellBound::OnePlus, "one-plus"}}}};
inline constexpr EnumNames<Optimizer, 3> kOptimizerNames{
    {{{Optimizer::Sgd, "sgd"}, {Optimizer::Momentum, "momentum"}, {Optimizer::Adam, "adam"}}}};
inline constexpr EnumNames<Normalization, 3> kNormalizationNames{
    {{{Normalization::PerDimension, "per-dim"},
      {Normalization::Global, "global"},
      {Normalization::None, "none"}}}};
}  // namespace detail

inline std::string_view to_string(InitNeighbors v) { return detail::kInitNeighborsNames.to_string(v); }
inline std::string_view to_string(ShellBound v) { return detail::kShellBoundNames.to_string(v); }
inline std::string_view to_string(Optimizer v) { return detail::kOptimizerNames.to_string(v); }
inline std::string_view to_string(Normalization v) { return detail::kNormalizationNames.to_string(v); }
inline bool parse_enum(std::string_view s, InitNeighbors& v) { return detail::kInitNeighborsNames.parse(s, v); }
inline bool parse_enum(std::string_view s, ShellBound& v) { return detail::kShellBoundNames.parse(s, v); }
inline bool parse_enum(std::string_view s, Optimizer& v) { return detail::kOptimizerNames.parse(s, v); }
inline bool parse_enum(std::string_view s, Normalization& v) { return detail::kNormalizationNames.parse(s, v); }

/// Every tunable of training, refinement, quantization and querying.
struct HyperParams {
  // objective
  double tau = 3.0;
  double lambda_div = 1.0;
  double lambda_cov = 1.0;
  double lambda_anchor = 1e-2;
  double alpha_anchor = 1e-1;
  double eps_num = 1e-12;

  // refinement
  double alpha_split = 0.9;
  double gamma_split = 1e-2;
  double e_clone = 2.2;
  double rho_clone = 0.6;
  double beta_clone = 0.3;
  double clone_min_frac = 8e-4;
  std::uint64_t prune_min_card = 2;
  std::uint64_t k_density = 10;
  ShellBound shell_bound = ShellBound::Scaled;

  // initialization
  std::uint64_t k_init_nn = 3;
  std::uint64_t K_init = 32;
  InitNeighbors init_neighbors = InitNeighbors::Centers;

  // schedule
  std::uint64_t epochs_max = 250;
  std::uint64_t warmup_epochs = 35;
  std::uint64_t splitclone_period = 35;
  std::uint64_t prune_period = 60;
  std::uint64_t early_stop_window = 10;
  double early_stop_tol = 1e-4;
  double lr_mu_start = 1e-7;
  double lr_mu_peak = 9e-3;
  double lr_mu_final = 3e-3;
  double lr_L_start = 1e-7;
  double lr_L_peak = 5e-4;
  double lr_L_final = 9e-5;
  std::uint64_t batch_size = 20000;
  Optimizer optimizer = Optimizer::Sgd;
  double momentum = 0.9;      // momentum coefficient, Adam beta1
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Normalization normalization = Normalization::PerDimension;

  // quantization
  std::uint64_t r_pca = 3;
  std::uint64_t n_radial = 6;
  std::uint64_t n_angular = 4;
  bool r_min_zero = false;

  // query
  double probe_ratio = 0.3;

  std::uint64_t seed = 0;

  /// Calls fn(name, field) for every field in a fixed order. The order is the
  /// on-disk order of the index header snapshot; append new fields at the end.
  template <typename Self, typename Fn>
  static void visit(Self& hp, Fn&& fn) {
    fn("tau", hp.tau);
    fn("lambda_div", hp.lambda_div);
    fn("lambda_cov", hp.lambda_cov);
    fn("lambda_anchor", hp.lambda_anchor);
    fn("alpha_anchor", hp.alpha_anchor);
    fn("eps_num", hp.eps_num);
    fn("alpha_split", hp.alpha_split);
    fn("gamma_split", hp.gamma_split);
    fn("e_clone", hp.e_clone);
    fn("rho_clone", hp.rho_clone);
    fn("beta_clone", hp.beta_clone);
    fn("clone_min_frac", hp.clone_min_frac);
    fn("prune_min_card", hp.prune_min_card);
    fn("k_density", hp.k_density);
    fn("shell_bound", hp.shell_bound);
    fn("k_init_nn", hp.k_init_nn);
    fn("K_init", hp.K_init);
    fn("init_neighbors", hp.init_neighbors);
    fn("epochs_max", hp.epochs_max);
    fn("warmup_epochs", hp.warmup_epochs);
    fn("splitclone_period", hp.splitclone_period);
    fn("prune_period", hp.prune_period);
    fn("early_stop_window", hp.early_stop_window);
    fn("early_stop_tol", hp.early_stop_tol);
    fn("lr_mu_start", hp.lr_mu_start);
    fn("lr_mu_peak", hp.lr_mu_peak);
    fn("lr_mu_final", hp.lr_mu_final);
    fn("lr_L_start", hp.lr_L_start);
    fn("lr_L_peak", hp.lr_L_peak);
    fn("lr_L_final", hp.lr_L_final);
    fn("batch_size", hp.batch_size);
    fn("optimizer", hp.optimizer);
    fn("momentum", hp.momentum);
    fn("adam_beta2", hp.adam_beta2);
    fn("adam_eps", hp.adam_eps);
    fn("normalization", hp.normalization);
    fn("r_pca", hp.r_pca);
    fn("n_radial", hp.n_radial);
    fn("n_angular", hp.n_angular);
    fn("r_min_zero", hp.r_min_zero);
    fn("probe_ratio", hp.probe_ratio);
    fn("seed", hp.seed);
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;

  /// Outer radius of the clone shell in Mahalanobis units.
  double shell_outer() const {
    return shell_bound == ShellBound::Scaled ? e_clone * tau : (1.0 + e_clone) * tau;
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw InvalidParameter(std::string("hyperparameter check failed: ") + what);
    };
    bool finite = true;
    visit(*this, [&](std::string_view, const auto& v) {
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>) finite = finite && std::isfinite(v);
    });
    require(finite, "all real-valued fields finite");
    require(tau > 0, "tau > 0");
    require(lambda_div >= 0 && lambda_cov >= 0 && lambda_anchor >= 0, "loss weights >= 0");
    require(alpha_anchor >= 0, "alpha_anchor >= 0");
    require(eps_num >= 0, "eps_num >= 0");
    require(alpha_split > 0 && alpha_split <= 1, "0 < alpha_split <= 1");
    require(gamma_split > 0, "gamma_split > 0");
    require(e_clone > 1, "e_clone > 1");
    require(rho_clone > 0 && rho_clone <= 1, "0 < rho_clone <= 1");
    require(beta_clone >= 0, "beta_clone >= 0");
    require(clone_min_frac >= 0, "clone_min_frac >= 0");
    require(k_density >= 1, "k_density >= 1");
    require(k_init_nn >= 1, "k_init_nn >= 1");
    require(K_init >= 1, "K_init >= 1");
    require(splitclone_period >= 1 && prune_period >= 1, "refinement periods >= 1");
    require(early_stop_window >= 1, "early_stop_window >= 1");
    require(lr_mu_start <= lr_mu_peak && lr_mu_final <= lr_mu_peak, "mean lr schedule start/final <= peak");
    require(lr_L_start <= lr_L_peak && lr_L_final <= lr_L_peak, "cholesky lr schedule start/final <= peak");
    require(lr_mu_final > 0 && lr_L_final > 0, "final learning rates > 0");
    require(batch_size >= 1, "batch_size >= 1");
    require(momentum >= 0 && momentum < 1, "0 <= momentum < 1");
    require(adam_beta2 >= 0 && adam_beta2 < 1, "0 <= adam_beta2 < 1");
    require(adam_eps > 0, "adam_eps > 0");
    require(r_pca >= 2, "r_pca >= 2");
    require(n_radial >= 1 && n_angular >= 1, "n_radial, n_angular >= 1");
    require(probe_ratio > 0 && probe_ratio <= 1, "0 < probe_ratio <= 1");
  }
};

}  // namespace garlic
