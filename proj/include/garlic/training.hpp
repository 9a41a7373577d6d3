#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "garlic/init.hpp"
#include "garlic/losses.hpp"
#include "garlic/refinement.hpp"

namespace garlic {

/// Linear warm-up from `start` to `peak`, then exponential decay reaching
/// `final` at `total_epochs`.
struct LRSchedule {
  double start = 0.0;
  double peak = 0.0;
  double final = 0.0;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 1;

  double at(std::size_t epoch) const {
    if (epoch < warmup_epochs)
      return start + (peak - start) * static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
    if (total_epochs <= warmup_epochs) return peak;
    const double t = static_cast<double>(epoch - warmup_epochs) / static_cast<double>(total_epochs - warmup_epochs);
    return peak * std::pow(final / peak, t);
  }
};

inline double lr_at(const LRSchedule& s, std::size_t epoch) { return s.at(epoch); }

inline LRSchedule mean_schedule(const HyperParams& hp) {
  return {hp.lr_mu_start, hp.lr_mu_peak, hp.lr_mu_final, hp.warmup_epochs, hp.epochs_max};
}

inline LRSchedule cholesky_schedule(const HyperParams& hp) {
  return {hp.lr_L_start, hp.lr_L_peak, hp.lr_L_final, hp.warmup_epochs, hp.epochs_max};
}

struct EpochRecord {
  LossBreakdown loss;
  std::size_t active_count = 0;
  double lr_mu = 0.0;
  double lr_L = 0.0;
};

/// Optimizer state of one Gaussian: first moment (momentum buffer), second
/// moment, and the number of updates it has received.
struct Moments {
  GaussianGrad first;
  GaussianGrad second;
  std::uint64_t steps = 0;

  explicit Moments(std::size_t d = 0) : first(d), second(d) {}
};

struct TrainState {
  GaussianSet gaussians;
  std::size_t epoch = 0;  // epochs completed
  std::size_t initial_count = 0;
  std::vector<EpochRecord> history;
  std::vector<RefinementEvent> events;
  std::vector<Moments> moments;  // per Gaussian; zero for new Gaussians
  Rng rng;
  bool early_stopped = false;
};

/// Optional per-epoch observer (progress output, logging).
using EpochCallback = std::function<void(const TrainState&)>;

namespace detail {

template <typename M>
void adam_step(M& p, const M& g, M& m, M& v, double lr, const HyperParams& hp, double c1, double c2) {
  m = hp.momentum * m + (1.0 - hp.momentum) * g;
  v = hp.adam_beta2 * v + (1.0 - hp.adam_beta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hp.adam_eps);
}

inline void apply_update(GaussianParams& g, const GaussianGrad& grad, Moments& st, const HyperParams& hp, double lr_mu,
                         double lr_L) {
  ++st.steps;
  switch (hp.optimizer) {
    case Optimizer::Sgd:
      g.mu -= lr_mu * grad.mu;
      g.log_diag -= lr_L * grad.log_diag;
      g.lower -= lr_L * grad.lower;
      break;
    case Optimizer::Momentum:
      st.first.mu = hp.momentum * st.first.mu + grad.mu;
      st.first.log_diag = hp.momentum * st.first.log_diag + grad.log_diag;
      st.first.lower = hp.momentum * st.first.lower + grad.lower;
      g.mu -= lr_mu * st.first.mu;
      g.log_diag -= lr_L * st.first.log_diag;
      g.lower -= lr_L * st.first.lower;
      break;
    case Optimizer::Adam: {
      const double c1 = 1.0 - std::pow(hp.momentum, static_cast<double>(st.steps));
      const double c2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(st.steps));
      adam_step(g.mu, grad.mu, st.first.mu, st.second.mu, lr_mu, hp, c1, c2);
      adam_step(g.log_diag, grad.log_diag, st.first.log_diag, st.second.log_diag, lr_L, hp, c1, c2);
      adam_step(g.lower, grad.lower, st.first.lower, st.second.lower, lr_L, hp, c1, c2);
      g.lower.triangularView<Eigen::Upper>().setZero();
      break;
    }
  }
}

inline bool loss_plateaued(const std::vector<EpochRecord>& h, std::size_t window, double tol) {
  if (h.size() <= window) return false;
  const double before = h[h.size() - 1 - window].loss.total;
  const double now = h.back().loss.total;
  const double denom = std::max(std::abs(before), 1e-300);
  return (before - now) / denom < tol;
}

}  // namespace detail

/// Optimizes the Gaussian set on X with mini-batch gradient descent and
/// periodic split/clone/prune. X should already be normalized.
template <typename T>
TrainState fit(PointsView<T> X, const HyperParams& hp, const EpochCallback& on_epoch = {}) {
  hp.validate();
  TrainState st;
  auto [G, report] = initialize_gaussians(X, hp);
  st.gaussians = std::move(G);
  st.initial_count = st.gaussians.size();
  st.rng.seed(hp.seed ^ 0xda942042e4dd58b5ULL);
  const std::size_t d = X.dim();
  for (std::size_t g = 0; g < st.gaussians.size(); ++g) st.moments.emplace_back(d);

  const auto sched_mu = mean_schedule(hp);
  const auto sched_L = cholesky_schedule(hp);
  const std::size_t n = X.size();
  const std::size_t batch = std::min<std::size_t>(hp.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t last_structural = 0;
  RowMatrix Xb;

  for (std::size_t epoch = 0; epoch < hp.epochs_max; ++epoch) {
    if (epoch >= hp.warmup_epochs && epoch > 0) {
      std::vector<RefinementEvent> ev;
      if (epoch % hp.splitclone_period == 0) ev = split_and_clone(st.gaussians, X, hp, epoch);
      if (epoch % hp.prune_period == 0) {
        auto pr = prune_step(st.gaussians, X, hp, epoch);
        ev.insert(ev.end(), pr.begin(), pr.end());
      }
      if (!ev.empty()) last_structural = epoch;
      st.events.insert(st.events.end(), ev.begin(), ev.end());
      while (st.moments.size() < st.gaussians.size()) st.moments.emplace_back(d);
      if (st.gaussians.active_count() != expected_active_count(st.initial_count, st.events))
        throw Error("refinement accounting mismatch at epoch " + std::to_string(epoch));
    }

    const double lr_mu = sched_mu.at(epoch);
    const double lr_L = sched_L.at(epoch);
    // Fisher-Yates with the library's own index draw keeps shuffles portable.
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(st.rng, i)]);

    LossBreakdown sum;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      Xb.resize(static_cast<Eigen::Index>(b1 - b0), static_cast<Eigen::Index>(d));
      for (std::size_t i = b0; i < b1; ++i)
        for (std::size_t j = 0; j < d; ++j)
          Xb(static_cast<Eigen::Index>(i - b0), static_cast<Eigen::Index>(j)) = static_cast<double>(X.row_ptr(order[i])[j]);
      const auto lg = total_loss_and_grads(PointsView<double>(Xb), st.gaussians, hp, epoch);
      const double w = static_cast<double>(b1 - b0) / static_cast<double>(n);
      sum.l_div += w * lg.loss.l_div;
      sum.l_cov += w * lg.loss.l_cov;
      sum.l_anchor += w * lg.loss.l_anchor;
      for (GaussianId g : st.gaussians.active_ids()) {
        detail::apply_update(st.gaussians[g], lg.grads[g], st.moments[g], hp, lr_mu, lr_L);
        if (!st.gaussians[g].finite())
          throw TrainingDivergence(epoch, "non-finite parameters for Gaussian " + std::to_string(g));
      }
    }
    sum.total = hp.lambda_div * sum.l_div + hp.lambda_cov * sum.l_cov + hp.lambda_anchor * sum.l_anchor;
    sum.epoch = epoch;
    st.history.push_back({sum, st.gaussians.active_count(), lr_mu, lr_L});
    st.epoch = epoch + 1;
    if (on_epoch) on_epoch(st);

    // Early stop only once warm-up is over and the window holds no
    // structural change.
    const std::size_t window = hp.early_stop_window;
    if (epoch + 1 >= hp.warmup_epochs + window && epoch >= last_structural + window &&
        detail::loss_plateaued(st.history, window, hp.early_stop_tol)) {
      st.early_stopped = true;
      break;
    }
  }
  return st;
}


inline constexpr const char* kTrainLogHeader =
    "kind,epoch,l_div,l_cov,l_anchor,total,active_K,lr_mu,lr_L,target,created,cardinality,ratio";

/// Training CSV: one `epoch` row per epoch, with refinement events as typed
/// rows ahead of the epoch they precede.
inline void write_training_log(std::ostream& os, const TrainState& st) {
  os << kTrainLogHeader << '\n';
  std::size_t next_event = 0;
  for (const auto& rec : st.history) {
    for (; next_event < st.events.size() && st.events[next_event].epoch <= rec.loss.epoch; ++next_event) {
      const auto& e = st.events[next_event];
      std::string created;
      for (std::size_t i = 0; i < e.created.size(); ++i) created += (i ? ";" : "") + std::to_string(e.created[i]);
      os << to_string(e.kind) << ',' << e.epoch << ",,,,,,,," << e.target << ',' << created << ',' << e.cardinality
         << ',' << format_real(e.ratio) << '\n';
    }
    os << "epoch," << rec.loss.epoch << ',' << format_real(rec.loss.l_div) << ',' << format_real(rec.loss.l_cov) << ','
       << format_real(rec.loss.l_anchor) << ',' << format_real(rec.loss.total) << ',' << rec.active_count << ','
       << format_real(rec.lr_mu) << ',' << format_real(rec.lr_L) << ",,,,\n";
  }
}

}  // namespace garlic
