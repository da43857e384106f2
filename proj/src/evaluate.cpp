#include "ppd/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "ppd/csv.hpp"

namespace ppd {

namespace {

// Deterministic work distribution: results land in pre-sized slots, so the
// outcome is independent of the worker count.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& body) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || count < 2) {
    for (size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  const size_t n_workers = std::min<size_t>(static_cast<size_t>(jobs), count);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (size_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (size_t i = w; i < count; i += n_workers) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(std::span<const double> xs) {
  MeanSe out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

}  // namespace

EvalReport score_generations(const GenerationSource& source,
                             std::span<const int64_t> context_ids, const Tensor& u,
                             std::span<const RewardSpec> specs, int n_per_context,
                             uint64_t seed, int jobs) {
  if (context_ids.empty()) fail(ErrorKind::invalid_argument, "score_generations: no contexts");
  if (n_per_context < 1) {
    fail(ErrorKind::invalid_argument, "score_generations: n_per_context must be >= 1");
  }

  const size_t total = context_ids.size() * static_cast<size_t>(n_per_context);
  std::vector<std::vector<double>> scores(specs.size(), std::vector<double>(total));

  parallel_for(total, jobs, [&](size_t idx) {
    const size_t c = idx / static_cast<size_t>(n_per_context);
    const size_t rep = idx % static_cast<size_t>(n_per_context);
    const int64_t ctx = context_ids[c];
    const uint64_t draw_seed =
        mix_seed(seed, "score", {static_cast<uint64_t>(ctx), static_cast<uint64_t>(rep)});
    const Tensor x = source.generate(ctx, u, draw_seed);
    for (size_t f = 0; f < specs.size(); ++f) {
      scores[f][idx] = eval_reward(specs[f], ctx, x);
    }
  });

  EvalReport report;
  report.seed = seed;
  report.n_contexts = static_cast<int>(context_ids.size());
  report.n_per_context = n_per_context;
  for (size_t f = 0; f < specs.size(); ++f) {
    const MeanSe ms = mean_and_se(scores[f]);
    report.per_family.push_back(
        FamilyScore{specs[f].family, ms.mean, ms.se, static_cast<int>(total)});
  }
  return report;
}

WinRateResult win_rate(const GenerationSource& side_a, const GenerationSource& side_b,
                       std::span<const int64_t> context_ids, const SyntheticUser& judge,
                       std::span<const RewardSpec> specs, const Tensor& u_a, const Tensor& u_b,
                       uint64_t seed_a, uint64_t seed_b, int jobs) {
  if (context_ids.empty()) fail(ErrorKind::invalid_argument, "win_rate: no contexts");

  std::vector<int> outcome(context_ids.size());  // +1 win, -1 loss, 0 tie
  parallel_for(context_ids.size(), jobs, [&](size_t i) {
    const int64_t ctx = context_ids[i];
    const Tensor a = side_a.generate(ctx, u_a, mix_seed(seed_a, {static_cast<uint64_t>(ctx)}));
    const Tensor b = side_b.generate(ctx, u_b, mix_seed(seed_b, {static_cast<uint64_t>(ctx)}));
    const double ra = user_reward(judge, ctx, a, specs);
    const double rb = user_reward(judge, ctx, b, specs);
    if (std::abs(ra - rb) < 1e-12) {
      outcome[i] = 0;
    } else {
      outcome[i] = ra > rb ? 1 : -1;
    }
  });

  WinRateResult result;
  for (int o : outcome) {
    if (o > 0) ++result.wins;
    else if (o < 0) ++result.losses;
    else ++result.ties;
  }
  const int decisive = result.wins + result.losses;
  result.rate = decisive == 0 ? 0.5
                              : static_cast<double>(result.wins) / static_cast<double>(decisive);
  return result;
}

std::vector<std::vector<double>> onehot_edge_grid(int n_families, int points) {
  if (points < 2) fail(ErrorKind::invalid_argument, "onehot_edge_grid: points must be >= 2");
  std::vector<std::vector<double>> grid;
  for (int i = 0; i < n_families; ++i) {
    for (int j = i + 1; j < n_families; ++j) {
      for (int p = 0; p < points; ++p) {
        // skip duplicate endpoints already emitted by an earlier edge
        const double wj = static_cast<double>(p) / static_cast<double>(points - 1);
        std::vector<double> w(static_cast<size_t>(n_families), 0.0);
        w[static_cast<size_t>(i)] = 1.0 - wj;
        w[static_cast<size_t>(j)] = wj;
        if (std::find(grid.begin(), grid.end(), w) == grid.end()) grid.push_back(w);
      }
    }
  }
  return grid;
}

InterpolationSweep interpolation_sweep(const GenerationSource& source,
                                       const std::vector<std::vector<double>>& weight_grid,
                                       std::span<const int64_t> context_ids,
                                       std::span<const RewardSpec> specs, int n_per_context,
                                       uint64_t seed, int jobs) {
  if (weight_grid.empty()) fail(ErrorKind::invalid_argument, "interpolation_sweep: empty grid");

  InterpolationSweep sweep;
  const size_t n_families = specs.size();
  for (size_t f = 0; f < n_families; ++f) {
    std::vector<double> onehot(n_families, 0.0);
    onehot[f] = 1.0;
    if (std::find(weight_grid.begin(), weight_grid.end(), onehot) == weight_grid.end()) {
      sweep.missing_endpoints.push_back(static_cast<int>(f));
    }
  }

  for (const std::vector<double>& weights : weight_grid) {
    const Tensor u = interpolate_users(weights);
    // same seed for every grid point: per-context streams are paired
    EvalReport report = score_generations(source, context_ids, u, specs, n_per_context,
                                          seed, jobs);
    sweep.rows.push_back(SweepRow{weights, std::move(report.per_family)});
  }
  return sweep;
}

HeldoutEvalResult heldout_user_eval(const GenerationSource& source, const UserEncoder& encoder,
                                    const DatasetSplits& splits,
                                    std::span<const RewardSpec> specs, int shots,
                                    uint64_t seed, int jobs) {
  check_no_leakage(splits.train, splits.seen_test);
  check_no_leakage(splits.train, splits.unseen_test);

  const Tensor zero_u = Tensor::zeros({encoder.config.out_dim});

  auto eval_split = [&](const PreferenceDataset& split, const std::vector<int64_t>& users,
                        std::string_view tag) {
    WinRateResult total;
    for (int64_t user_id : users) {
      if (static_cast<int>(split.pairs_of_user(user_id).size()) < shots) continue;
      Rng fs_rng(mix_seed(seed, tag, {static_cast<uint64_t>(user_id)}));
      const FewShotSet fewshot = draw_fewshot(split, user_id, shots, fs_rng);
      const Tensor u = encoder.encode(fewshot);

      // judge on held-out contexts the few-shot set did not use
      std::set<int64_t> used;
      for (const FewShotExample& ex : fewshot.examples) used.insert(ex.context_id);
      std::vector<int64_t> contexts;
      for (int64_t ctx : splits.heldout_contexts) {
        if (!used.count(ctx)) contexts.push_back(ctx);
      }
      if (contexts.empty()) continue;

      const SyntheticUser& judge = split.user(user_id);
      const uint64_t seed_a = mix_seed(seed, tag, {static_cast<uint64_t>(user_id), 1});
      const uint64_t seed_b = mix_seed(seed, tag, {static_cast<uint64_t>(user_id), 2});
      const WinRateResult wr =
          win_rate(source, source, contexts, judge, specs, u, zero_u, seed_a, seed_b, jobs);
      total.wins += wr.wins;
      total.losses += wr.losses;
      total.ties += wr.ties;
    }
    const int decisive = total.wins + total.losses;
    total.rate = decisive == 0 ? 0.5
                               : static_cast<double>(total.wins) / static_cast<double>(decisive);
    return total;
  };

  HeldoutEvalResult result;
  result.seen = eval_split(splits.seen_test, splits.train_users, "heldout-seen");
  result.unseen = eval_split(splits.unseen_test, splits.unseen_users, "heldout-unseen");
  result.aggregate.wins = result.seen.wins + result.unseen.wins;
  result.aggregate.losses = result.seen.losses + result.unseen.losses;
  result.aggregate.ties = result.seen.ties + result.unseen.ties;
  const int decisive = result.aggregate.wins + result.aggregate.losses;
  result.aggregate.rate =
      decisive == 0 ? 0.5
                    : static_cast<double>(result.aggregate.wins) / static_cast<double>(decisive);
  return result;
}

double wilson_lower_bound(int successes, int n, double z) {
  if (n <= 0) fail(ErrorKind::invalid_argument, "wilson_lower_bound: n must be > 0");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = p + z2 / (2.0 * nn);
  const double margin = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return (center - margin) / denom;
}

namespace {

std::vector<double> ranks_with_ties(std::span<const double> xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    fail(ErrorKind::invalid_argument, "spearman: need two equal-length samples of size >= 2");
  }
  const std::vector<double> rx = ranks_with_ties(xs);
  const std::vector<double> ry = ranks_with_ties(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

void write_scores_csv(const std::vector<std::pair<std::string, EvalReport>>& reports,
                      const std::filesystem::path& path) {
  CsvWriter csv({"condition", "family", "mean", "se", "n"});
  for (const auto& [condition, report] : reports) {
    for (const FamilyScore& fs : report.per_family) {
      csv.cell(condition);
      csv.cell(to_string(fs.family));
      csv.cell(fs.mean);
      csv.cell(fs.se);
      csv.cell(fs.n);
      csv.end_row();
    }
  }
  csv.save(path);
}

void write_winrate_csv(const std::vector<std::pair<std::string, WinRateResult>>& results,
                       const std::filesystem::path& path) {
  CsvWriter csv({"split", "wins", "losses", "ties", "rate"});
  for (const auto& [split, wr] : results) {
    csv.cell(split);
    csv.cell(wr.wins);
    csv.cell(wr.losses);
    csv.cell(wr.ties);
    csv.cell(wr.rate);
    csv.end_row();
  }
  csv.save(path);
}

void write_sweep_csv(const InterpolationSweep& sweep, const std::filesystem::path& path) {
  CsvWriter csv({"w1", "w2", "w3", "family", "mean", "se"});
  for (const SweepRow& row : sweep.rows) {
    for (const FamilyScore& fs : row.scores) {
      for (size_t i = 0; i < 3; ++i) {
        csv.cell(i < row.weights.size() ? row.weights[i] : 0.0);
      }
      csv.cell(to_string(fs.family));
      csv.cell(fs.mean);
      csv.cell(fs.se);
      csv.end_row();
    }
  }
  csv.save(path);
}

}  // namespace ppd
