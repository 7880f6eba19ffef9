#include "carbonedge/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "carbonedge/error.hpp"
#include "carbonedge/rng.hpp"

namespace carbonedge {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();

double tie_tolerance(double v) { return 1e-10 * std::max(1.0, std::abs(v)); }

bool over_capacity(double used, double cap) { return used > cap + 1e-9 * std::max(1.0, std::abs(cap)); }

using Clock = std::chrono::steady_clock;

struct Incumbent {
  std::optional<AssignmentSolution> sol;

  bool offer(AssignmentSolution&& candidate) {
    if (sol && !better_solution(candidate, *sol)) return false;
    sol = std::move(candidate);
    return true;
  }
  double value() const { return sol ? sol->value : kInf; }
};

class Solver {
 public:
  Solver(const AssignmentProblem& p, const SolverOptions& o)
      : p_(p), o_(o), n_(p.num_apps()), m_(p.num_servers), dims_(p.num_dims),
        start_(Clock::now()), rng_(0x5eedu + p.num_apps()) {
    opt_index_.assign(n_ * m_, -1);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < p.options[i].size(); ++k) {
        opt_index_[i * m_ + p.options[i][k].server] = static_cast<std::int32_t>(k);
      }
    }
    compute_shares();
    sorted_.resize(n_);
    static_key_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& opts = p.options[i];
      static_key_[i].resize(opts.size());
      for (std::size_t k = 0; k < opts.size(); ++k) {
        static_key_[i][k] = opts[k].cost + share_[opts[k].server];
      }
      sorted_[i].resize(opts.size());
      std::iota(sorted_[i].begin(), sorted_[i].end(), 0u);
      std::sort(sorted_[i].begin(), sorted_[i].end(), [&](std::uint32_t a, std::uint32_t b) {
        if (static_key_[i][a] != static_key_[i][b]) return static_key_[i][a] < static_key_[i][b];
        return opts[a].server < opts[b].server;
      });
    }
  }

  SolverOutcome run(std::span<const std::vector<std::uint32_t>> seeds) {
    SolverOutcome out;
    if (n_ == 0) {
      out.status = SolveStatus::kOptimal;
      out.best = AssignmentSolution{};
      return out;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      if (p_.options[i].empty()) {
        out.status = SolveStatus::kInfeasible;
        return out;
      }
    }

    for (const auto& seed : seeds) {
      if (auto s = evaluate_assignment(p_, seed)) inc_.offer(std::move(*s));
    }
    if (auto g = greedy()) inc_.offer(std::move(*g));
    if (inc_.sol) {
      auto improved = local_search(inc_.sol->server, at_fraction(0.3));
      if (auto s = evaluate_assignment(p_, improved)) inc_.offer(std::move(*s));
    }

    exact_ = n_ <= o_.exact_threshold;
    double root_lb = 0.0;
    if (!exact_ && inc_.sol) {
      root_lb = large_search();
      if (within_gap(root_lb)) {
        out.best = inc_.sol;
        out.lower_bound = std::min(root_lb, inc_.value());
        out.status = inc_.value() - root_lb <= tie_tolerance(inc_.value()) ? SolveStatus::kOptimal
                                                                           : SolveStatus::kFeasibleGap;
        return out;
      }
    }

    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0u);
    if (!exact_) {
      std::vector<double> regret(n_, kInf);
      for (std::size_t i = 0; i < n_; ++i) {
        if (sorted_[i].size() >= 2) regret[i] = static_key_[i][sorted_[i][1]] - static_key_[i][sorted_[i][0]];
      }
      std::stable_sort(order_.begin(), order_.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return regret[a] > regret[b]; });
    }

    used_.assign(m_ * dims_, 0.0);
    count_.assign(m_, 0);
    assign_.assign(n_, kNone);
    cost_ = 0.0;
    acts_ = 0;
    aborted_ = false;
    gap_pruned_ = false;
    dfs(0);

    out.nodes = nodes_;
    out.best = inc_.sol;
    if (!aborted_) {
      if (!inc_.sol) {
        out.status = SolveStatus::kInfeasible;
      } else if (gap_pruned_) {
        out.status = SolveStatus::kFeasibleGap;
        out.lower_bound = std::max(root_lb, inc_.value() * (1.0 - o_.optimality_gap));
      } else {
        out.status = SolveStatus::kOptimal;
        out.lower_bound = inc_.value();
      }
    } else {
      out.lower_bound = root_lb;
      out.status = inc_.sol && within_gap(root_lb) ? SolveStatus::kFeasibleGap : SolveStatus::kTimeout;
    }
    return out;
  }

 private:
  // Activation cost spread over the most apps that could ever share the
  // server; the sum over its apps never exceeds the real cost.
  void compute_shares() {
    share_.assign(m_, 0.0);
    std::vector<std::vector<double>> per_dim(dims_);
    std::vector<std::size_t> candidates(m_, 0);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_server(m_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < p_.options[i].size(); ++k) by_server[p_.options[i][k].server].push_back({i, k});
    }
    for (std::size_t j = 0; j < m_; ++j) {
      if (p_.powered[j] || by_server[j].empty()) continue;
      std::size_t limit = by_server[j].size();
      std::vector<double> q;
      for (std::size_t d = 0; d < dims_; ++d) {
        q.clear();
        for (auto [i, k] : by_server[j]) q.push_back(p_.demands[i][k * dims_ + d]);
        std::sort(q.begin(), q.end());
        double acc = 0.0;
        std::size_t fit = 0;
        while (fit < q.size() && !over_capacity(acc + q[fit], p_.capacity[j * dims_ + d])) acc += q[fit++];
        limit = std::min(limit, fit);
      }
      share_[j] = p_.activation_cost[j] / static_cast<double>(std::max<std::size_t>(limit, 1));
    }
  }

  bool within_gap(double lb) const {
    if (!inc_.sol) return false;
    const double v = inc_.value();
    return v - lb <= o_.optimality_gap * std::abs(v) + tie_tolerance(v);
  }

  bool out_of_budget() {
    if (nodes_ >= o_.max_nodes) return true;
    if ((nodes_ & 1023u) == 0) {
      const std::chrono::duration<double> elapsed = Clock::now() - start_;
      if (elapsed.count() > o_.time_limit_s) return true;
    }
    return false;
  }

  bool fits(std::uint32_t j, const double* dem, const std::vector<double>& used) const {
    for (std::size_t d = 0; d < dims_; ++d) {
      if (over_capacity(used[j * dims_ + d] + dem[d], p_.capacity[j * dims_ + d])) return false;
    }
    return true;
  }

  const double* demand(std::size_t i, std::size_t k) const { return p_.demands[i].data() + k * dims_; }

  bool is_open(std::uint32_t j, const std::vector<std::uint32_t>& count) const {
    return p_.powered[j] || count[j] > 0;
  }

  // Regret greedy. Servers flagged in `free_open` are priced as if already on.
  std::optional<AssignmentSolution> greedy(const std::vector<char>* free_open = nullptr) const {
    std::vector<double> used(m_ * dims_, 0.0);
    std::vector<std::uint32_t> count(m_, 0);
    std::vector<std::uint32_t> server(n_, kNone);
    std::vector<std::size_t> chosen_opt(n_);
    for (std::size_t step = 0; step < n_; ++step) {
      std::size_t pick = n_;
      std::size_t pick_opt = 0;
      double pick_regret = -1.0;
      for (std::size_t i = 0; i < n_; ++i) {
        if (server[i] != kNone) continue;
        double best = kInf, second = kInf;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < p_.options[i].size(); ++k) {
          const auto& opt = p_.options[i][k];
          if (!fits(opt.server, demand(i, k), used)) continue;
          const bool open = is_open(opt.server, count) || (free_open != nullptr && (*free_open)[opt.server]);
          const double eff = opt.cost + (open ? 0.0 : p_.activation_cost[opt.server]);
          if (eff < best || (eff == best && opt.server < p_.options[i][best_k].server)) {
            second = best;
            best = eff;
            best_k = k;
          } else if (eff < second) {
            second = eff;
          }
        }
        if (best == kInf) return std::nullopt;
        const double regret = second == kInf ? kInf : second - best;
        if (regret > pick_regret) {
          pick_regret = regret;
          pick = i;
          pick_opt = best_k;
        }
      }
      const auto j = p_.options[pick][pick_opt].server;
      const double* dem = demand(pick, pick_opt);
      for (std::size_t d = 0; d < dims_; ++d) used[j * dims_ + d] += dem[d];
      ++count[j];
      server[pick] = j;
    }
    return evaluate_assignment(p_, server);
  }

  // First-improvement moves, swaps and facility closings until no step helps.
  std::vector<std::uint32_t> local_search(std::vector<std::uint32_t> server, Clock::time_point deadline) const {
    std::vector<double> used(m_ * dims_, 0.0);
    std::vector<std::uint32_t> count(m_, 0);
    std::vector<std::size_t> opt_of(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      opt_of[i] = static_cast<std::size_t>(opt_index_[i * m_ + server[i]]);
      const double* dem = demand(i, opt_of[i]);
      for (std::size_t d = 0; d < dims_; ++d) used[server[i] * dims_ + d] += dem[d];
      ++count[server[i]];
    }
    auto place = [&](std::size_t i, std::size_t k, double sign) {
      const auto j = p_.options[i][k].server;
      const double* dem = demand(i, k);
      for (std::size_t d = 0; d < dims_; ++d) used[j * dims_ + d] += sign * dem[d];
      if (sign > 0) {
        ++count[j];
      } else {
        --count[j];
      }
    };
    auto open_delta = [&](std::uint32_t j) { return is_open(j, count) ? 0.0 : p_.activation_cost[j]; };
    auto close_delta = [&](std::uint32_t j) {
      return !p_.powered[j] && count[j] == 1 ? p_.activation_cost[j] : 0.0;
    };
    const double eps = 1e-12;

    bool improved = true;
    for (int pass = 0; improved && pass < 50 && Clock::now() < deadline; ++pass) {
      improved = false;
      for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t cur = opt_of[i];
        const auto cj = server[i];
        for (std::size_t k = 0; k < p_.options[i].size(); ++k) {
          const auto j = p_.options[i][k].server;
          if (j == cj) continue;
          const double delta = p_.options[i][k].cost - p_.options[i][cur].cost + open_delta(j) - close_delta(cj);
          if (delta >= -eps) continue;
          if (!fits(j, demand(i, k), used)) continue;
          place(i, cur, -1.0);
          place(i, k, 1.0);
          server[i] = j;
          opt_of[i] = k;
          improved = true;
          break;
        }
      }
      for (std::size_t a = 0; a < n_; ++a) {
        for (std::size_t b = a + 1; b < n_; ++b) {
          const auto ja = server[a], jb = server[b];
          if (ja == jb) continue;
          const auto ka = opt_index_[a * m_ + jb];
          const auto kb = opt_index_[b * m_ + ja];
          if (ka < 0 || kb < 0) continue;
          const double delta = p_.options[a][ka].cost + p_.options[b][kb].cost -
                               p_.options[a][opt_of[a]].cost - p_.options[b][opt_of[b]].cost;
          if (delta >= -eps) continue;
          place(a, opt_of[a], -1.0);
          place(b, opt_of[b], -1.0);
          const bool ok = fits(jb, demand(a, ka), used) &&
                          [&] {
                            place(a, ka, 1.0);
                            const bool f = fits(ja, demand(b, kb), used);
                            place(a, ka, -1.0);
                            return f;
                          }();
          if (ok) {
            place(a, ka, 1.0);
            place(b, kb, 1.0);
            server[a] = jb;
            server[b] = ja;
            opt_of[a] = ka;
            opt_of[b] = kb;
            improved = true;
          } else {
            place(a, opt_of[a], 1.0);
            place(b, opt_of[b], 1.0);
          }
        }
      }
      for (std::uint32_t j = 0; j < m_; ++j) {
        if (p_.powered[j] || count[j] == 0) continue;
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n_; ++i) {
          if (server[i] == j) members.push_back(i);
        }
        auto trial_used = used;
        auto trial_count = count;
        double delta = -p_.activation_cost[j];
        std::vector<std::pair<std::size_t, std::size_t>> moves;
        bool ok = true;
        for (auto i : members) {
          double best = kInf;
          std::size_t best_k = 0;
          for (std::size_t k = 0; k < p_.options[i].size(); ++k) {
            const auto t = p_.options[i][k].server;
            if (t == j || !is_open(t, trial_count)) continue;
            if (!fits(t, demand(i, k), trial_used)) continue;
            if (p_.options[i][k].cost < best) {
              best = p_.options[i][k].cost;
              best_k = k;
            }
          }
          if (best == kInf) {
            ok = false;
            break;
          }
          const auto t = p_.options[i][best_k].server;
          const double* dem = demand(i, best_k);
          for (std::size_t d = 0; d < dims_; ++d) trial_used[t * dims_ + d] += dem[d];
          ++trial_count[t];
          delta += best - p_.options[i][opt_of[i]].cost;
          moves.push_back({i, best_k});
        }
        if (!ok || delta >= -eps) continue;
        for (auto [i, k] : moves) {
          place(i, opt_of[i], -1.0);
          place(i, k, 1.0);
          server[i] = p_.options[i][k].server;
          opt_of[i] = k;
        }
        improved = true;
      }
    }
    return server;
  }

  Clock::time_point at_fraction(double f) const {
    return start_ + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(o_.time_limit_s * f));
  }

  // Lower bound on min sum_t profit[t] x[t] over 0/1 x within every capacity
  // (profits negative): the best surrogate relaxation, which merges the
  // capacity rows with non-negative weights into one fractional knapsack.
  // Single rows and a golden-section search along each pair of rows are
  // tried. x receives the fractional solution of the best surrogate.
  double knapsack(std::size_t j, const std::vector<double>& profit, const std::vector<const double*>& weight,
                  std::vector<double>& x) const {
    const std::size_t t_count = profit.size();
    x.assign(t_count, 0.0);
    std::vector<double> cap(dims_);
    for (std::size_t d = 0; d < dims_; ++d) {
      const double c = p_.capacity[j * dims_ + d];
      cap[d] = c + 1e-9 * std::max(1.0, std::abs(c));
    }
    std::vector<std::size_t> usable;
    for (std::size_t t = 0; t < t_count; ++t) {
      bool ok = true;
      for (std::size_t d = 0; d < dims_; ++d) ok = ok && weight[t][d] <= cap[d];
      if (ok) usable.push_back(t);
    }
    if (usable.empty()) return 0.0;

    // Weights as fractions of capacity.
    std::vector<double> nw(t_count * dims_, 0.0);
    for (auto t : usable) {
      for (std::size_t d = 0; d < dims_; ++d) nw[t * dims_ + d] = weight[t][d] > 0.0 ? weight[t][d] / cap[d] : 0.0;
    }
    std::vector<double> s(t_count), frac(t_count);
    std::vector<std::size_t> idx;
    // Fractional knapsack under sum_t s_t x_t <= 1 with s from row weights w.
    // Only a prefix of the ratio order fits, so it is sorted in growing chunks.
    auto surrogate = [&](const std::vector<double>& w, std::vector<double>& out) {
      std::fill(out.begin(), out.end(), 0.0);
      idx.clear();
      double v = 0.0;
      for (auto t : usable) {
        double st = 0.0;
        for (std::size_t d = 0; d < dims_; ++d) st += w[d] * nw[t * dims_ + d];
        s[t] = st;
        if (st == 0.0) {
          v += profit[t];
          out[t] = 1.0;
        } else {
          idx.push_back(t);
        }
      }
      auto by_ratio = [&](std::size_t a, std::size_t b) { return profit[a] * s[b] < profit[b] * s[a]; };
      double room = 1.0;
      std::size_t sorted_to = 0;
      for (std::size_t pos = 0; pos < idx.size(); ++pos) {
        if (pos == sorted_to) {
          const std::size_t next = std::min(idx.size(), std::max<std::size_t>(16, 2 * sorted_to));
          std::partial_sort(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(next),
                            idx.end(), by_ratio);
          sorted_to = next;
        }
        const std::size_t t = idx[pos];
        if (s[t] <= room) {
          v += profit[t];
          out[t] = 1.0;
          room -= s[t];
        } else {
          out[t] = room / s[t];
          v += profit[t] * out[t];
          break;
        }
      }
      return v;
    };

    if (dims_ == 0) {
      double v = 0.0;
      for (auto t : usable) {
        v += profit[t];
        x[t] = 1.0;
      }
      return v;
    }
    double best = -kInf;
    std::vector<double> w(dims_, 0.0);
    auto try_weights = [&]() {
      const double v = surrogate(w, frac);
      if (v > best) {
        best = v;
        x = frac;
      }
      return v;
    };
    if (dims_ == 1) {
      w[0] = 1.0;
      return try_weights();
    }
    if (dims_ > 2) {
      for (std::size_t d = 0; d < dims_; ++d) {
        std::fill(w.begin(), w.end(), 0.0);
        w[d] = 1.0;
        try_weights();
      }
    }
    // Pair weights per server persist across calls; each call probes the
    // previous weight and two neighbours, then moves and adapts the width.
    auto& pairs = surrogate_t_[j];
    if (pairs.empty()) pairs.assign(dims_ * (dims_ - 1) / 2, {0.5, 0.25});
    std::size_t slot = 0;
    for (std::size_t d1 = 0; d1 < dims_; ++d1) {
      for (std::size_t d2 = d1 + 1; d2 < dims_; ++d2, ++slot) {
        auto at = [&](double t) {
          std::fill(w.begin(), w.end(), 0.0);
          w[d1] = t;
          w[d2] = 1.0 - t;
          return try_weights();
        };
        auto& [t, width] = pairs[slot];
        const double mid = at(t);
        const double left = at(std::max(0.0, t - width));
        const double right = at(std::min(1.0, t + width));
        if (left > mid && left >= right) {
          t = std::max(0.0, t - width);
        } else if (right > mid) {
          t = std::min(1.0, t + width);
        } else {
          width = std::max(width * 0.5, 1.0 / 1024.0);
          continue;
        }
        width = std::min(width * 1.5, 0.5);
      }
    }
    // A surrogate solution can overfill one original row; scaled back inside
    // every row it makes a better subgradient.
    double f = 1.0;
    for (std::size_t d = 0; d < dims_; ++d) {
      double used = 0.0;
      for (auto t : usable) used += nw[t * dims_ + d] * x[t];
      f = std::max(f, used);
    }
    for (auto& xi : x) xi /= f;
    return best;
  }

  struct Lagrangian {
    std::vector<double> u;
    double best = -kInf;
    double theta = 2.0;
    int stall = 0;
    bool converged = false;
    std::vector<char> open;  // servers the last relaxed solution wanted on
  };

  // Value of the relaxation that drops the one-server-per-app constraints,
  // with its subgradient in g. Each server then faces a knapsack over the
  // apps whose cost is below their multiplier.
  double relaxed_value(const std::vector<double>& u, std::vector<double>& g, std::vector<char>& open) const {
    std::vector<double> profit, x;
    std::vector<const double*> weight;
    std::vector<std::size_t> apps;
    double value = 0.0;
    for (std::size_t i = 0; i < n_; ++i) value += u[i];
    g.assign(n_, 1.0);
    open.assign(m_, 0);
    for (std::size_t j = 0; j < m_; ++j) {
      apps.clear();
      profit.clear();
      weight.clear();
      for (auto [i, k] : by_server_[j]) {
        const double r = p_.options[i][k].cost - u[i];
        if (r < 0.0) {
          apps.push_back(i);
          profit.push_back(r);
          weight.push_back(demand(i, k));
        }
      }
      if (apps.empty()) continue;
      const double facility = (p_.powered[j] ? 0.0 : p_.activation_cost[j]) + knapsack(j, profit, weight, x);
      if (facility < 0.0) {
        value += facility;
        open[j] = 1;
        for (std::size_t t = 0; t < apps.size(); ++t) g[apps[t]] -= x[t];
      }
    }
    return value;
  }

  // Subgradient ascent with Polyak steps towards the incumbent value; the
  // step factor halves after 40 steps without a new best. Every 50 steps the
  // relaxed solution also seeds a repaired incumbent.
  void lagrangian_steps(Lagrangian& lag, int steps, Clock::time_point deadline) {
    if (lag.u.empty()) {
      lag.u.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) lag.u[i] = static_key_[i][sorted_[i][0]];
    }
    std::vector<double> g;
    for (int iter = 0; iter < steps && !lag.converged; ++iter) {
      if ((iter & 3) == 0 && Clock::now() > deadline) break;
      const double value = relaxed_value(lag.u, g, lag.open);
      if (lag.best == -kInf || value > lag.best + 1e-12 * std::max(1.0, std::abs(lag.best))) {
        lag.best = value;
        lag.stall = 0;
      } else if (++lag.stall >= 40) {
        lag.theta *= 0.5;
        lag.stall = 0;
      }
      if (++lag_iter_ % 50 == 0) {
        if (auto s = greedy(&lag.open)) {
          auto improved = local_search(s->server, deadline);
          if (auto t = evaluate_assignment(p_, improved)) inc_.offer(std::move(*t));
        }
      }
      if (within_gap(lag.best)) break;
      double norm = 0.0;
      for (double gi : g) norm += gi * gi;
      if (norm == 0.0 || lag.theta < 1e-4) {
        lag.converged = true;
        break;
      }
      const double step = lag.theta * (inc_.value() - value) / norm;
      for (std::size_t i = 0; i < n_; ++i) lag.u[i] += step * g[i];
    }
  }

  // Large-neighbourhood search. Each step frees a handful of apps chosen
  // around one server (apps that would gain by moving onto it, the apps it
  // hosts, or the apps of it and a second server) and re-solves them exactly
  // over their cheapest options with everything else fixed.
  bool neighbourhood_steps(int steps, Clock::time_point deadline, const std::vector<char>& hint) {
    bool any = false;
    const std::size_t max_free = 10;
    const std::size_t max_options = 24;
    std::vector<char> freed_mask(n_);
    std::vector<std::uint32_t> opened, hosting, idle, hinted;
    std::vector<std::uint32_t> count(m_);
    for (int step = 0; step < steps; ++step) {
      if ((step & 7) == 0 && Clock::now() > deadline) break;
      const auto& cur = inc_.sol->server;
      std::fill(count.begin(), count.end(), 0);
      for (auto j : cur) ++count[j];
      opened.clear();
      hosting.clear();
      idle.clear();
      hinted.clear();
      for (std::uint32_t j = 0; j < m_; ++j) {
        if (count[j] > 0) {
          hosting.push_back(j);
          if (!p_.powered[j]) opened.push_back(j);
        } else if (!by_server_[j].empty()) {
          idle.push_back(j);
          if (!hint.empty() && hint[j]) hinted.push_back(j);
        }
      }

      std::vector<std::uint32_t> freed;
      auto add_apps_on = [&](std::uint32_t j) {
        for (std::uint32_t i = 0; i < n_; ++i) {
          if (cur[i] == j && !freed_mask[i] && freed.size() < max_free) {
            freed.push_back(i);
            freed_mask[i] = 1;
          }
        }
      };
      auto pick = [&](const std::vector<std::uint32_t>& pool) { return pool[rng_.index(pool.size())]; };
      std::fill(freed_mask.begin(), freed_mask.end(), 0);
      const std::uint64_t kind = rng_.index(3);
      if (kind == 0) {
        // Attract: the apps that save most by moving onto one idle server.
        const auto& pool = !hinted.empty() && rng_.index(2) == 0 ? hinted : idle.empty() ? hosting : idle;
        const std::uint32_t j = pick(pool);
        std::vector<std::pair<double, std::uint32_t>> gain;
        for (auto [i, k] : by_server_[j]) {
          const auto ck = opt_index_[i * m_ + cur[i]];
          const double save = p_.options[i][static_cast<std::size_t>(ck)].cost - p_.options[i][k].cost;
          if (save > 0.0) gain.push_back({-save, static_cast<std::uint32_t>(i)});
        }
        std::sort(gain.begin(), gain.end());
        for (std::size_t t = 0; t < gain.size() && freed.size() < max_free; ++t) {
          freed.push_back(gain[t].second);
          freed_mask[gain[t].second] = 1;
        }
      } else if (kind == 1) {
        // Empty one server, preferably an activated one, plus random apps for room.
        add_apps_on(!opened.empty() && rng_.index(2) == 0 ? pick(opened) : pick(hosting));
        for (int tries = 0; tries < 20 && freed.size() < max_free; ++tries) add_apps_on(cur[rng_.index(n_)]);
      } else {
        add_apps_on(pick(hosting));
        add_apps_on(pick(hosting));
      }
      if (freed.empty()) continue;
      std::sort(freed.begin(), freed.end());

      AssignmentProblem sub;
      sub.num_servers = m_;
      sub.num_dims = dims_;
      sub.capacity = p_.capacity;
      sub.activation_cost = p_.activation_cost;
      sub.powered = p_.powered;
      for (std::size_t i = 0; i < n_; ++i) {
        if (freed_mask[i]) continue;
        const auto j = cur[i];
        const double* dem = demand(i, static_cast<std::size_t>(opt_index_[i * m_ + j]));
        for (std::size_t d = 0; d < dims_; ++d) sub.capacity[j * dims_ + d] -= dem[d];
        sub.powered[j] = 1;
      }
      std::vector<std::uint32_t> seed;
      for (auto i : freed) {
        // Cheapest options with open servers free, always keeping the current one.
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t k = 0; k < p_.options[i].size(); ++k) {
          const auto j = p_.options[i][k].server;
          ranked.push_back({p_.options[i][k].cost + (sub.powered[j] ? 0.0 : share_[j]), k});
        }
        const std::size_t keep = std::min(max_options, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
        ranked.resize(keep);
        const auto ck = static_cast<std::size_t>(opt_index_[i * m_ + cur[i]]);
        if (std::none_of(ranked.begin(), ranked.end(), [&](const auto& r) { return r.second == ck; })) {
          ranked.push_back({0.0, ck});
        }
        std::vector<AssignmentOption> opts;
        std::vector<double> dem;
        for (const auto& [key, k] : ranked) {
          opts.push_back(p_.options[i][k]);
          dem.insert(dem.end(), demand(i, k), demand(i, k) + dims_);
        }
        sub.add_app(std::move(opts), std::move(dem));
        seed.push_back(cur[i]);
      }
      SolverOptions so;
      so.time_limit_s = 0.05;
      so.exact_threshold = max_free;
      so.max_nodes = 5000;
      const std::vector<std::vector<std::uint32_t>> seeds{seed};
      Solver inner(sub, so);
      const SolverOutcome r = inner.run(seeds);
      if (!r.best) continue;
      std::vector<std::uint32_t> next = cur;
      for (std::size_t t = 0; t < freed.size(); ++t) next[freed[t]] = r.best->server[t];
      if (auto s = evaluate_assignment(p_, next)) {
        const double before = inc_.value();
        if (inc_.offer(std::move(*s)) && inc_.value() < before - tie_tolerance(before)) any = true;
      }
    }
    return any;
  }

  // Alternates relaxation and neighbourhood rounds until the gap closes, the
  // time share runs out or neither side moves. Returns the best bound.
  double large_search() {
    by_server_.assign(m_, {});
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < p_.options[i].size(); ++k) by_server_[p_.options[i][k].server].push_back({i, k});
    }
    Lagrangian lag;
    surrogate_t_.assign(m_, {});
    // Work is capped by rounds so results repeat unless the time limit bites.
    const Clock::time_point deadline = at_fraction(0.9);
    for (int round = 0; round < 60; ++round) {
      lagrangian_steps(lag, 100, deadline);
      if (within_gap(lag.best) || Clock::now() > deadline) break;
      const bool moved = neighbourhood_steps(300, deadline, lag.open);
      if (within_gap(lag.best) || Clock::now() > deadline) break;
      if (lag.converged && !moved) break;
      if (lag.converged) {
        // A better incumbent changes the step length; resume from the multipliers.
        lag.converged = false;
        lag.theta = 0.5;
      }
    }
    // Per-app cheapest costs, plus any negative activation, bound it too.
    double trivial = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double c = kInf;
      for (const auto& o : p_.options[i]) c = std::min(c, o.cost);
      trivial += c;
    }
    for (std::size_t j = 0; j < m_; ++j) trivial += p_.powered[j] ? 0.0 : std::min(0.0, p_.activation_cost[j]);
    return std::max(lag.best, trivial);
  }

  // Sum over unassigned apps of their cheapest fitting option, with closed
  // servers charged their activation share. +inf when some app cannot fit.
  double remaining_bound(std::size_t depth) const {
    double lb = 0.0;
    for (std::size_t t = depth; t < n_; ++t) {
      const std::size_t i = order_[t];
      double best = kInf;
      for (auto k : sorted_[i]) {
        if (fits(p_.options[i][k].server, demand(i, k), used_)) {
          best = static_key_[i][k];
          break;
        }
      }
      for (auto j : opened_) {
        const auto k = opt_index_[i * m_ + j];
        if (k < 0) continue;
        const double c = p_.options[i][k].cost;
        if (c < best && fits(j, demand(i, k), used_)) best = c;
      }
      if (best == kInf) return kInf;
      lb += best;
    }
    return lb;
  }

  // Lexicographic comparison of the assigned prefix against the incumbent.
  int compare_prefix(std::size_t depth) const {
    for (std::size_t t = 0; t < depth; ++t) {
      const auto a = assign_[order_[t]], b = inc_.sol->server[order_[t]];
      if (a != b) return a < b ? -1 : 1;
    }
    return 0;
  }

  bool prune(double lb, std::size_t depth) {
    if (!inc_.sol) return false;
    const double inc = inc_.value();
    const double tol = tie_tolerance(inc);
    if (lb > inc + tol) return true;
    if (lb >= inc - tol) {
      if (acts_ > inc_.sol->activations) return true;
      if (!exact_) {
        if (acts_ == inc_.sol->activations) return true;
        return false;
      }
      if (acts_ == inc_.sol->activations && compare_prefix(depth) > 0) return true;
      return false;
    }
    if (!exact_ && o_.optimality_gap > 0.0 && lb >= inc - o_.optimality_gap * std::abs(inc)) {
      gap_pruned_ = true;
      return true;
    }
    return false;
  }

  void dfs(std::size_t depth) {
    if (aborted_) return;
    ++nodes_;
    if (out_of_budget()) {
      aborted_ = true;
      return;
    }
    if (depth == n_) {
      if (auto s = evaluate_assignment(p_, assign_)) inc_.offer(std::move(*s));
      return;
    }
    const double lb = cost_ + remaining_bound(depth);
    if (lb == kInf || prune(lb, depth)) return;

    const std::size_t i = order_[depth];
    struct Child {
      double key;
      std::uint32_t server;
      std::size_t opt;
    };
    std::vector<Child> children;
    children.reserve(p_.options[i].size());
    for (std::size_t k = 0; k < p_.options[i].size(); ++k) {
      const auto j = p_.options[i][k].server;
      if (!fits(j, demand(i, k), used_)) continue;
      const double key = p_.options[i][k].cost + (is_open(j, count_) ? 0.0 : p_.activation_cost[j]);
      children.push_back({key, j, k});
    }
    std::sort(children.begin(), children.end(), [](const Child& a, const Child& b) {
      if (a.key != b.key) return a.key < b.key;
      return a.server < b.server;
    });

    for (const auto& c : children) {
      const double* dem = demand(i, c.opt);
      const bool opens = !is_open(c.server, count_);
      const double saved_cost = cost_;
      for (std::size_t d = 0; d < dims_; ++d) used_[c.server * dims_ + d] += dem[d];
      ++count_[c.server];
      assign_[i] = c.server;
      cost_ += c.key;
      if (opens) {
        ++acts_;
        opened_.push_back(c.server);
      }
      dfs(depth + 1);
      if (opens) {
        --acts_;
        opened_.pop_back();
      }
      cost_ = saved_cost;
      assign_[i] = kNone;
      --count_[c.server];
      for (std::size_t d = 0; d < dims_; ++d) used_[c.server * dims_ + d] -= dem[d];
      if (aborted_) return;
    }
  }

  const AssignmentProblem& p_;
  const SolverOptions& o_;
  std::size_t n_, m_, dims_;
  Clock::time_point start_;
  Rng rng_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_server_;
  mutable std::vector<std::vector<std::pair<double, double>>> surrogate_t_;
  std::uint64_t lag_iter_ = 0;

  std::vector<std::int32_t> opt_index_;
  std::vector<double> share_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::vector<std::vector<double>> static_key_;
  std::vector<std::uint32_t> order_;

  std::vector<double> used_;
  std::vector<std::uint32_t> count_;
  std::vector<std::uint32_t> assign_;
  std::vector<std::uint32_t> opened_;
  double cost_ = 0.0;
  std::size_t acts_ = 0;

  Incumbent inc_;
  bool exact_ = true;
  bool aborted_ = false;
  bool gap_pruned_ = false;
  std::uint64_t nodes_ = 0;
};

}  // namespace

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kFeasibleGap: return "feasible_gap";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kTimeout: return "timeout";
  }
  return "unknown";
}

SolveStatus parse_solve_status(std::string_view text) {
  for (auto s : {SolveStatus::kOptimal, SolveStatus::kFeasibleGap, SolveStatus::kInfeasible, SolveStatus::kTimeout}) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorKind::kParse, "unknown solve status '" + std::string(text) + "'");
}

void AssignmentProblem::add_app(std::vector<AssignmentOption> opts, std::vector<double> demand) {
  if (demand.size() != opts.size() * num_dims) {
    fail(ErrorKind::kPrecondition, "demand vector does not match the option count");
  }
  options.push_back(std::move(opts));
  demands.push_back(std::move(demand));
}

std::optional<AssignmentSolution> evaluate_assignment(const AssignmentProblem& problem,
                                                      std::span<const std::uint32_t> server_of_app) {
  const std::size_t n = problem.num_apps();
  const std::size_t dims = problem.num_dims;
  if (server_of_app.size() != n) return std::nullopt;
  std::vector<double> used(problem.num_servers * dims, 0.0);
  std::vector<char> hosts(problem.num_servers, 0);
  AssignmentSolution sol;
  sol.server.assign(server_of_app.begin(), server_of_app.end());
  double op = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = server_of_app[i];
    const auto& opts = problem.options[i];
    std::size_t k = 0;
    while (k < opts.size() && opts[k].server != j) ++k;
    if (k == opts.size()) return std::nullopt;
    op += opts[k].cost;
    for (std::size_t d = 0; d < dims; ++d) used[j * dims + d] += problem.demands[i][k * dims + d];
    hosts[j] = 1;
  }
  double act = 0.0;
  for (std::size_t j = 0; j < problem.num_servers; ++j) {
    for (std::size_t d = 0; d < dims; ++d) {
      if (over_capacity(used[j * dims + d], problem.capacity[j * dims + d])) return std::nullopt;
    }
    if (hosts[j] && !problem.powered[j]) {
      act += problem.activation_cost[j];
      ++sol.activations;
    }
  }
  sol.value = op + act;
  return sol;
}

bool better_solution(const AssignmentSolution& a, const AssignmentSolution& b) {
  const double tol = tie_tolerance(std::max(std::abs(a.value), std::abs(b.value)));
  if (a.value < b.value - tol) return true;
  if (a.value > b.value + tol) return false;
  if (a.activations != b.activations) return a.activations < b.activations;
  return a.server < b.server;
}

SolverOutcome solve_assignment(const AssignmentProblem& problem, const SolverOptions& options,
                               std::span<const std::vector<std::uint32_t>> seeds) {
  if (problem.capacity.size() != problem.num_servers * problem.num_dims ||
      problem.activation_cost.size() != problem.num_servers || problem.powered.size() != problem.num_servers) {
    fail(ErrorKind::kPrecondition, "assignment problem arrays do not match the server count");
  }
  for (const auto& opts : problem.options) {
    for (const auto& o : opts) {
      if (o.server >= problem.num_servers) fail(ErrorKind::kPrecondition, "option references an unknown server");
    }
  }
  Solver solver(problem, options);
  return solver.run(seeds);
}

}  // namespace carbonedge
