#pragma once

#include <map>

#include "ppd/dataset.hpp"
#include "ppd/denoiser.hpp"
#include "ppd/graph.hpp"

namespace ppd {

// User embeddings. The all-zero vector is reserved to mean "no user
// conditioning"; the adapter contributes exactly nothing for it.

Tensor onehot_user(int index, int k);

// u = sum_i weights[i] * e_i = weights verbatim; no renormalization, so the
// one-hot endpoints keep their training-time meaning.
Tensor interpolate_users(const std::vector<double>& weights);

// With probability p returns the reserved zero embedding, else u unchanged.
Tensor dropout_user(const Tensor& u, double p, Rng& rng);

struct FewShotExample {
  int64_t context_id = 0;
  Tensor preferred;
  Tensor rejected;
};

struct FewShotSet {
  int64_t user_id = 0;
  std::vector<FewShotExample> examples;
};

FewShotSet draw_fewshot(const PreferenceDataset& ds, int64_t user_id, int shots, Rng& rng);

struct EncoderConfig {
  int data_dim = 8;
  int hidden = 32;
  int out_dim = 16;
  uint64_t context_seed = 0;  // featurizer seed, shared with the align target
  double temperature = 0.1;
};

// [g(c), x+, x-, x+ - x-] for one example; the per-example embedder input.
Tensor example_features(const EncoderConfig& cfg, const FewShotExample& ex);

// Permutation-invariant set encoder: per-example MLP, mean pooling over the
// (canonically ordered) examples, linear projection to out_dim.
struct UserEncoder {
  EncoderConfig config;
  ParamStore params;

  static UserEncoder init(const EncoderConfig& config, uint64_t seed);

  NodeId build_embed(Graph& g, const std::vector<NodeId>& example_rows) const;
  Tensor encode(const FewShotSet& set) const;
};

struct EncoderTrainConfig {
  int steps = 600;
  int batch_users = 8;
  int shots = 4;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Contrastive training over pairs of disjoint few-shot sets: same-user set
// embeddings attract, different users repel (squared-distance InfoNCE in
// both directions).
std::vector<TrainPoint> train_encoder(UserEncoder& encoder, const PreferenceDataset& ds,
                                      const EncoderTrainConfig& cfg);

// Linear classifier over frozen encoder embeddings, one logit per user.
struct ProbeClassifier {
  std::vector<int64_t> user_ids;  // logit order
  ParamStore params;
};

struct ProbeTrainConfig {
  int steps = 400;
  double lr = 0.05;
  uint64_t seed = 0;
};

ProbeClassifier train_probe(const UserEncoder& encoder, const std::vector<FewShotSet>& sets,
                            const std::vector<int64_t>& user_ids, const ProbeTrainConfig& cfg);

// Fraction of held-out sets whose owner ranks in the top-k logits, per k.
std::map<int, double> probe_topk_accuracy(const ProbeClassifier& probe,
                                          const UserEncoder& encoder,
                                          const std::vector<FewShotSet>& heldout_sets,
                                          const std::vector<int>& ks);

}  // namespace ppd
