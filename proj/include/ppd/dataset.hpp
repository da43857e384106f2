#pragma once

#include <filesystem>
#include <functional>
#include <unordered_map>

#include "ppd/rewards.hpp"

namespace ppd {

// One labeled comparison: (context, preferred sample, rejected sample, user).
struct PreferencePair {
  int64_t context_id = 0;
  Tensor preferred;
  Tensor rejected;
  int64_t user_id = 0;
};

struct DatasetHeader {
  int dim = 0;
  LabelMode mode = LabelMode::deterministic;
  uint64_t seed = 0;
  std::vector<RewardSpec> specs;
  std::vector<SyntheticUser> users;
};

struct PreferenceDataset {
  DatasetHeader header;
  std::vector<PreferencePair> pairs;

  void rebuild_index();
  const std::vector<size_t>& pairs_of_user(int64_t user_id) const;
  const SyntheticUser& user(int64_t user_id) const;
  std::vector<int64_t> context_ids() const;  // unique, sorted

 private:
  std::unordered_map<int64_t, std::vector<size_t>> by_user_;
};

using CandidateSource = std::function<Tensor(int64_t context_id, Rng& rng)>;

// Relabeling protocol: per (user, pair-index) quota draw two candidates for a
// round-robin context, score them with the user's reward mixture, and order
// them via bt_label. Fully reproducible from the seed via counter-derived
// streams per (user, context, pair).
PreferenceDataset build_dataset(const std::vector<SyntheticUser>& users, int n_contexts,
                                int pairs_per_user, const CandidateSource& source,
                                LabelMode mode, uint64_t seed,
                                std::vector<RewardSpec> specs, int dim);

// Binary format: magic "PPDDATA1", u32 version, little-endian fields and
// 64-bit reals throughout; exact round-trips.
inline constexpr char kDatasetMagic[9] = "PPDDATA1";
inline constexpr uint32_t kDatasetVersion = 1;

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path);
PreferenceDataset load_dataset(const std::filesystem::path& path);

// columns: user_id, context_id, reward_plus, reward_minus, label_mode
void export_dataset_csv(const PreferenceDataset& ds, const std::filesystem::path& path);

struct DatasetSplits {
  PreferenceDataset train;        // train users x train contexts
  PreferenceDataset seen_test;    // train users x held-out contexts
  PreferenceDataset unseen_test;  // held-out users x held-out contexts
  std::vector<int64_t> train_users;
  std::vector<int64_t> unseen_users;
  std::vector<int64_t> train_contexts;
  std::vector<int64_t> heldout_contexts;
};

// Users and contexts are split independently so "held-out context" is
// literal; pairs of held-out users on train contexts are dropped entirely.
DatasetSplits split_dataset(const PreferenceDataset& ds, double unseen_user_frac,
                            double heldout_context_frac, uint64_t seed);

// Errors if any pair (bytewise identical record) appears in both datasets.
void check_no_leakage(const PreferenceDataset& train, const PreferenceDataset& test);

}  // namespace ppd
