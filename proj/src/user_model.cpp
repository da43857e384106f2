#include "ppd/user_model.hpp"

#include <algorithm>
#include <cmath>

#include "ppd/optimizer.hpp"

namespace ppd {

Tensor onehot_user(int index, int k) {
  if (k < 1) fail(ErrorKind::invalid_argument, "onehot_user: k must be >= 1");
  if (index < 0 || index >= k) {
    fail(ErrorKind::invalid_argument,
         "onehot_user: index " + std::to_string(index) + " outside [0, " + std::to_string(k) + ")");
  }
  Tensor u = Tensor::zeros({k});
  u[index] = 1.0;
  return u;
}

Tensor interpolate_users(const std::vector<double>& weights) {
  if (weights.empty()) fail(ErrorKind::invalid_argument, "interpolate_users: empty weights");
  for (double w : weights) {
    if (w < 0.0) fail(ErrorKind::invalid_argument, "interpolate_users: negative weight");
    if (!std::isfinite(w)) fail(ErrorKind::non_finite, "interpolate_users: non-finite weight");
  }
  return Tensor::from({static_cast<int64_t>(weights.size())}, weights);
}

Tensor dropout_user(const Tensor& u, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    fail(ErrorKind::invalid_argument, "dropout_user: p must lie in [0, 1)");
  }
  if (p > 0.0 && rng.uniform() < p) return Tensor::zeros(u.shape());
  return u;
}

FewShotSet draw_fewshot(const PreferenceDataset& ds, int64_t user_id, int shots, Rng& rng) {
  const std::vector<size_t>& indices = ds.pairs_of_user(user_id);
  if (static_cast<int>(indices.size()) < shots) {
    fail(ErrorKind::invalid_argument,
         "draw_fewshot: user " + std::to_string(user_id) + " has only " +
             std::to_string(indices.size()) + " pairs, need " + std::to_string(shots));
  }
  std::vector<size_t> order = indices;
  rng.shuffle(order);
  FewShotSet set;
  set.user_id = user_id;
  for (int i = 0; i < shots; ++i) {
    const PreferencePair& p = ds.pairs[order[static_cast<size_t>(i)]];
    set.examples.push_back(FewShotExample{p.context_id, p.preferred, p.rejected});
  }
  return set;
}

Tensor example_features(const EncoderConfig& cfg, const FewShotExample& ex) {
  if (ex.preferred.numel() != cfg.data_dim || ex.rejected.numel() != cfg.data_dim) {
    fail(ErrorKind::shape_mismatch, "example_features: sample dim mismatch");
  }
  const Tensor ctx = seeded_context_vector(cfg.context_seed, ex.context_id, cfg.data_dim);
  return hcat({ctx, ex.preferred.flat(), ex.rejected.flat(),
               sub(ex.preferred.flat(), ex.rejected.flat())});
}

UserEncoder UserEncoder::init(const EncoderConfig& config, uint64_t seed) {
  UserEncoder enc;
  enc.config = config;
  Rng rng(mix_seed(seed, "encoder-init"));
  auto w = [&](std::vector<int64_t> shape) {
    const double fan_in = static_cast<double>(shape[0]);
    return Tensor::random_normal(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
  };
  enc.params.add("embed.in_w", w({4 * config.data_dim, config.hidden}));
  enc.params.add("embed.in_b", Tensor::zeros({1, config.hidden}));
  enc.params.add("proj.out_w", w({config.hidden, config.out_dim}));
  enc.params.add("proj.out_b", Tensor::zeros({1, config.out_dim}));
  return enc;
}

NodeId UserEncoder::build_embed(Graph& g, const std::vector<NodeId>& example_rows) const {
  if (example_rows.empty()) fail(ErrorKind::invalid_argument, "encode_user: empty set");
  NodeId in_w = g.param(params, "embed.in_w");
  NodeId in_b = g.param(params, "embed.in_b");
  NodeId pooled = -1;
  for (NodeId row : example_rows) {
    NodeId h = g.tanh(g.add(g.matmul(row, in_w), in_b));
    pooled = pooled < 0 ? h : g.add(pooled, h);
  }
  pooled = g.scale(pooled, 1.0 / static_cast<double>(example_rows.size()));
  return g.add(g.matmul(pooled, g.param(params, "proj.out_w")), g.param(params, "proj.out_b"));
}

namespace {

// Canonical example order makes mean pooling exactly permutation invariant,
// floating-point rounding included.
std::vector<FewShotExample> canonical_order(const std::vector<FewShotExample>& examples) {
  std::vector<FewShotExample> sorted = examples;
  std::sort(sorted.begin(), sorted.end(),
            [](const FewShotExample& a, const FewShotExample& b) {
              if (a.context_id != b.context_id) return a.context_id < b.context_id;
              if (a.preferred.values() != b.preferred.values()) {
                return a.preferred.values() < b.preferred.values();
              }
              return a.rejected.values() < b.rejected.values();
            });
  return sorted;
}

}  // namespace

Tensor UserEncoder::encode(const FewShotSet& set) const {
  if (set.examples.empty()) fail(ErrorKind::invalid_argument, "encode_user: empty set");
  Graph g;
  std::vector<NodeId> rows;
  for (const FewShotExample& ex : canonical_order(set.examples)) {
    rows.push_back(g.constant(example_features(config, ex).row()));
  }
  NodeId out = build_embed(g, rows);
  g.set_root(g.sum(out));
  g.evaluate(params);
  return g.value(out).flat();
}

std::vector<TrainPoint> train_encoder(UserEncoder& encoder, const PreferenceDataset& ds,
                                      const EncoderTrainConfig& cfg) {
  if (ds.header.users.size() < 2) {
    fail(ErrorKind::invalid_argument, "train_encoder: need at least 2 users");
  }
  for (const SyntheticUser& u : ds.header.users) {
    if (static_cast<int>(ds.pairs_of_user(u.id).size()) < 2 * cfg.shots) {
      fail(ErrorKind::invalid_argument,
           "train_encoder: user " + std::to_string(u.id) + " has fewer than " +
               std::to_string(2 * cfg.shots) + " pairs");
    }
  }

  AdamWState state;
  AdamWConfig opt;
  opt.lr = cfg.lr;
  const double inv_temp = 1.0 / encoder.config.temperature;

  std::vector<TrainPoint> history;
  history.reserve(static_cast<size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(mix_seed(cfg.seed, "encoder-step", {static_cast<uint64_t>(step)}));

    std::vector<int64_t> ids;
    for (const SyntheticUser& u : ds.header.users) ids.push_back(u.id);
    rng.shuffle(ids);
    const size_t batch = std::min<size_t>(static_cast<size_t>(cfg.batch_users), ids.size());
    ids.resize(batch);

    Graph g;
    std::vector<NodeId> view_a(batch), view_b(batch);
    for (size_t i = 0; i < batch; ++i) {
      // two disjoint few-shot sets of the same user
      const auto& pair_indices = ds.pairs_of_user(ids[i]);
      std::vector<size_t> order = pair_indices;
      rng.shuffle(order);
      auto embed_slice = [&](size_t offset) {
        std::vector<FewShotExample> examples;
        for (int s = 0; s < cfg.shots; ++s) {
          const PreferencePair& p = ds.pairs[order[offset + static_cast<size_t>(s)]];
          examples.push_back(FewShotExample{p.context_id, p.preferred, p.rejected});
        }
        std::vector<NodeId> rows;
        for (const FewShotExample& ex : canonical_order(examples)) {
          rows.push_back(g.constant(example_features(encoder.config, ex).row()));
        }
        return encoder.build_embed(g, rows);
      };
      view_a[i] = embed_slice(0);
      view_b[i] = embed_slice(static_cast<size_t>(cfg.shots));
    }

    // logits[i][j] = -||z_a_i - z_b_j||^2 / temperature
    std::vector<std::vector<NodeId>> logits(batch, std::vector<NodeId>(batch));
    for (size_t i = 0; i < batch; ++i) {
      for (size_t j = 0; j < batch; ++j) {
        logits[i][j] = g.scale(g.squared_error(view_a[i], view_b[j]), -inv_temp);
      }
    }

    auto cross_entropy_row = [&](const std::vector<NodeId>& row, size_t truth) {
      Tensor mask = Tensor::zeros({static_cast<int64_t>(row.size())});
      mask[static_cast<int64_t>(truth)] = 1.0;
      NodeId probs = g.softmax(g.concat(row));
      NodeId picked = g.sum(g.mul(probs, g.constant(mask)));
      return g.scale(g.log(picked), -1.0);
    };

    NodeId total = -1;
    for (size_t i = 0; i < batch; ++i) {
      std::vector<NodeId> row = logits[i];
      std::vector<NodeId> col(batch);
      for (size_t j = 0; j < batch; ++j) col[j] = logits[j][i];
      NodeId term = g.add(cross_entropy_row(row, i), cross_entropy_row(col, i));
      total = total < 0 ? term : g.add(total, term);
    }
    g.set_root(g.scale(total, 1.0 / (2.0 * static_cast<double>(batch))));

    const double loss = g.evaluate(encoder.params).item();
    ParamStore grads = g.backward();
    adamw_step(encoder.params, grads, state, opt);
    history.push_back({step, loss});
  }
  return history;
}

ProbeClassifier train_probe(const UserEncoder& encoder, const std::vector<FewShotSet>& sets,
                            const std::vector<int64_t>& user_ids, const ProbeTrainConfig& cfg) {
  if (sets.empty() || user_ids.empty()) {
    fail(ErrorKind::invalid_argument, "train_probe: empty sets or user list");
  }
  const int64_t n_users = static_cast<int64_t>(user_ids.size());
  const int64_t k = encoder.config.out_dim;

  ProbeClassifier probe;
  probe.user_ids = user_ids;
  probe.params.add("probe.w", Tensor::zeros({k, n_users}));
  probe.params.add("probe.b", Tensor::zeros({1, n_users}));

  auto logit_index = [&](int64_t user_id) -> size_t {
    for (size_t i = 0; i < user_ids.size(); ++i) {
      if (user_ids[i] == user_id) return i;
    }
    fail(ErrorKind::invalid_argument, "train_probe: set owner not in user list");
  };

  // encoder frozen: embeddings are plain constants of the probe graph
  std::vector<Tensor> embeddings;
  std::vector<size_t> truths;
  for (const FewShotSet& set : sets) {
    embeddings.push_back(encoder.encode(set).row());
    truths.push_back(logit_index(set.user_id));
  }

  AdamWState state;
  AdamWConfig opt;
  opt.lr = cfg.lr;

  for (int step = 0; step < cfg.steps; ++step) {
    Graph g;
    NodeId w = g.param(probe.params, "probe.w");
    NodeId b = g.param(probe.params, "probe.b");
    NodeId total = -1;
    for (size_t i = 0; i < embeddings.size(); ++i) {
      NodeId logits = g.add(g.matmul(g.constant(embeddings[i]), w), b);
      Tensor mask = Tensor::zeros({1, n_users});
      mask.at(0, static_cast<int64_t>(truths[i])) = 1.0;
      NodeId picked = g.sum(g.mul(g.softmax(logits), g.constant(mask)));
      NodeId loss_i = g.scale(g.log(picked), -1.0);
      total = total < 0 ? loss_i : g.add(total, loss_i);
    }
    g.set_root(g.scale(total, 1.0 / static_cast<double>(embeddings.size())));
    g.evaluate(probe.params);
    ParamStore grads = g.backward();
    adamw_step(probe.params, grads, state, opt);
  }
  return probe;
}

std::map<int, double> probe_topk_accuracy(const ProbeClassifier& probe,
                                          const UserEncoder& encoder,
                                          const std::vector<FewShotSet>& heldout_sets,
                                          const std::vector<int>& ks) {
  if (heldout_sets.empty()) {
    fail(ErrorKind::invalid_argument, "probe_topk_accuracy: no evaluation sets");
  }
  const int n_users = static_cast<int>(probe.user_ids.size());
  for (int k : ks) {
    if (k < 1 || k > n_users) {
      fail(ErrorKind::invalid_argument,
           "probe_topk_accuracy: k=" + std::to_string(k) + " outside [1, " +
               std::to_string(n_users) + "]");
    }
  }

  const Tensor& w = probe.params.at("probe.w");
  const Tensor& b = probe.params.at("probe.b");

  std::map<int, int> hits;
  for (int k : ks) hits[k] = 0;

  for (const FewShotSet& set : heldout_sets) {
    const Tensor z = encoder.encode(set);
    std::vector<double> logits(static_cast<size_t>(n_users));
    for (int j = 0; j < n_users; ++j) {
      double s = b.at(0, j);
      for (int64_t c = 0; c < z.numel(); ++c) s += z[c] * w.at(c, j);
      logits[static_cast<size_t>(j)] = s;
    }
    int truth = -1;
    for (int j = 0; j < n_users; ++j) {
      if (probe.user_ids[static_cast<size_t>(j)] == set.user_id) truth = j;
    }
    if (truth < 0) {
      fail(ErrorKind::invalid_argument, "probe_topk_accuracy: set owner not in probe");
    }
    // rank with a stable index tie-break
    int rank = 0;
    for (int j = 0; j < n_users; ++j) {
      if (j == truth) continue;
      if (logits[static_cast<size_t>(j)] > logits[static_cast<size_t>(truth)] ||
          (logits[static_cast<size_t>(j)] == logits[static_cast<size_t>(truth)] && j < truth)) {
        ++rank;
      }
    }
    for (int k : ks) {
      if (rank < k) hits[k] += 1;
    }
  }

  std::map<int, double> accuracy;
  for (int k : ks) {
    accuracy[k] = static_cast<double>(hits[k]) / static_cast<double>(heldout_sets.size());
  }
  return accuracy;
}

}  // namespace ppd
