#include "ppd/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "ppd/csv.hpp"

namespace ppd {

void PreferenceDataset::rebuild_index() {
  by_user_.clear();
  for (size_t i = 0; i < pairs.size(); ++i) {
    by_user_[pairs[i].user_id].push_back(i);
  }
  for (const PreferencePair& p : pairs) {
    bool known = false;
    for (const SyntheticUser& u : header.users) known = known || u.id == p.user_id;
    if (!known) {
      fail(ErrorKind::state_error,
           "dataset: pair references unknown user " + std::to_string(p.user_id));
    }
  }
}

const std::vector<size_t>& PreferenceDataset::pairs_of_user(int64_t user_id) const {
  static const std::vector<size_t> empty;
  auto it = by_user_.find(user_id);
  return it == by_user_.end() ? empty : it->second;
}

const SyntheticUser& PreferenceDataset::user(int64_t user_id) const {
  for (const SyntheticUser& u : header.users) {
    if (u.id == user_id) return u;
  }
  fail(ErrorKind::invalid_argument, "dataset: unknown user " + std::to_string(user_id));
}

std::vector<int64_t> PreferenceDataset::context_ids() const {
  std::set<int64_t> ids;
  for (const PreferencePair& p : pairs) ids.insert(p.context_id);
  return {ids.begin(), ids.end()};
}

PreferenceDataset build_dataset(const std::vector<SyntheticUser>& users, int n_contexts,
                                int pairs_per_user, const CandidateSource& source,
                                LabelMode mode, uint64_t seed,
                                std::vector<RewardSpec> specs, int dim) {
  if (users.empty()) fail(ErrorKind::invalid_argument, "build_dataset: empty user list");
  if (n_contexts < 1 || pairs_per_user < 1) {
    fail(ErrorKind::invalid_argument, "build_dataset: counts must be >= 1");
  }

  PreferenceDataset ds;
  ds.header = DatasetHeader{dim, mode, seed, std::move(specs), users};
  ds.pairs.reserve(users.size() * static_cast<size_t>(pairs_per_user));

  for (const SyntheticUser& user : users) {
    for (int p = 0; p < pairs_per_user; ++p) {
      const int64_t context_id = p % n_contexts;
      Rng rng(mix_seed(seed, "pair", {static_cast<uint64_t>(user.id),
                                      static_cast<uint64_t>(context_id),
                                      static_cast<uint64_t>(p)}));
      Tensor a = source(context_id, rng);
      Tensor b = source(context_id, rng);
      if (a.numel() != dim || b.numel() != dim) {
        fail(ErrorKind::shape_mismatch, "build_dataset: candidate dim mismatch");
      }
      if (a == b) {
        fail(ErrorKind::invalid_argument,
             "build_dataset: candidate source returned identical samples");
      }
      const double r_a = user_reward(user, context_id, a, ds.header.specs);
      const double r_b = user_reward(user, context_id, b, ds.header.specs);
      const BtLabel label = bt_label(r_a, r_b, mode, rng);
      PreferencePair pair;
      pair.context_id = context_id;
      pair.user_id = user.id;
      pair.preferred = label.first_preferred ? a : b;
      pair.rejected = label.first_preferred ? b : a;
      ds.pairs.push_back(std::move(pair));
    }
  }
  ds.rebuild_index();
  return ds;
}

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_i64(std::string& out, int64_t v) { put_u64(out, static_cast<uint64_t>(v)); }
void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  uint32_t u32() { return static_cast<uint32_t>(raw(4)); }
  uint64_t u64() { return raw(8); }
  int64_t i64() { return static_cast<int64_t>(raw(8)); }
  double f64() {
    const uint64_t bits = raw(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void malformed(const std::string& what) {
    fail(ErrorKind::io_error, origin_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  uint64_t raw(size_t n) {
    need(n);
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  void need(size_t n) {
    if (pos_ + n > bytes_.size()) malformed("truncated file");
  }
  std::string bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

std::string pair_record_bytes(const PreferencePair& p) {
  std::string out;
  put_i64(out, p.context_id);
  put_i64(out, p.user_id);
  for (int64_t i = 0; i < p.preferred.numel(); ++i) put_f64(out, p.preferred[i]);
  for (int64_t i = 0; i < p.rejected.numel(); ++i) put_f64(out, p.rejected[i]);
  return out;
}

}  // namespace

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path) {
  std::string out;
  out.append(kDatasetMagic, 8);
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<uint32_t>(ds.header.dim));
  out.push_back(static_cast<char>(ds.header.mode));
  put_u64(out, ds.header.seed);
  put_u32(out, static_cast<uint32_t>(ds.header.specs.size()));
  for (const RewardSpec& s : ds.header.specs) {
    out.push_back(static_cast<char>(s.family));
    put_u64(out, s.target_seed);
    put_f64(out, s.scale);
    put_f64(out, s.offset);
  }
  put_u32(out, static_cast<uint32_t>(ds.header.users.size()));
  for (const SyntheticUser& u : ds.header.users) {
    put_i64(out, u.id);
    put_u32(out, static_cast<uint32_t>(u.weights.size()));
    for (double w : u.weights) put_f64(out, w);
  }
  put_u64(out, ds.pairs.size());
  for (const PreferencePair& p : ds.pairs) out.append(pair_record_bytes(p));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io_error, "cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::io_error, "write failed for '" + path.string() + "'");
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  if (r.str(8) != std::string(kDatasetMagic, 8)) {
    fail(ErrorKind::io_error, path.string() + ": unknown dataset magic");
  }
  const uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    fail(ErrorKind::io_error,
         path.string() + ": unsupported dataset version " + std::to_string(version));
  }

  PreferenceDataset ds;
  ds.header.dim = static_cast<int>(r.u32());
  if (ds.header.dim < 1 || ds.header.dim > (1 << 20)) r.malformed("implausible dimension");
  const std::string mode_byte = r.str(1);
  if (mode_byte[0] != 0 && mode_byte[0] != 1) r.malformed("bad label mode");
  ds.header.mode = static_cast<LabelMode>(mode_byte[0]);
  ds.header.seed = r.u64();

  const uint32_t n_specs = r.u32();
  if (n_specs > 64) r.malformed("implausible spec count");
  for (uint32_t i = 0; i < n_specs; ++i) {
    RewardSpec s;
    const std::string fam = r.str(1);
    if (fam[0] < 0 || fam[0] >= kRewardFamilyCount) r.malformed("bad reward family");
    s.family = static_cast<RewardFamily>(fam[0]);
    s.target_seed = r.u64();
    s.scale = r.f64();
    s.offset = r.f64();
    ds.header.specs.push_back(s);
  }

  const uint32_t n_users = r.u32();
  if (n_users > (1u << 20)) r.malformed("implausible user count");
  for (uint32_t i = 0; i < n_users; ++i) {
    SyntheticUser u;
    u.id = r.i64();
    const uint32_t n_w = r.u32();
    if (n_w > 64) r.malformed("implausible weight count");
    u.weights.resize(n_w);
    for (auto& w : u.weights) w = r.f64();
    ds.header.users.push_back(std::move(u));
  }

  const uint64_t n_pairs = r.u64();
  ds.pairs.reserve(n_pairs);
  for (uint64_t i = 0; i < n_pairs; ++i) {
    PreferencePair p;
    p.context_id = r.i64();
    p.user_id = r.i64();
    std::vector<double> plus(static_cast<size_t>(ds.header.dim));
    for (auto& v : plus) v = r.f64();
    std::vector<double> minus(static_cast<size_t>(ds.header.dim));
    for (auto& v : minus) v = r.f64();
    p.preferred = Tensor::from({ds.header.dim}, std::move(plus));
    p.rejected = Tensor::from({ds.header.dim}, std::move(minus));
    ds.pairs.push_back(std::move(p));
  }
  if (!r.at_end()) r.malformed("trailing bytes");
  ds.rebuild_index();
  return ds;
}

void export_dataset_csv(const PreferenceDataset& ds, const std::filesystem::path& path) {
  CsvWriter csv({"user_id", "context_id", "reward_plus", "reward_minus", "label_mode"});
  for (const PreferencePair& p : ds.pairs) {
    const SyntheticUser& u = ds.user(p.user_id);
    csv.cell(p.user_id);
    csv.cell(p.context_id);
    csv.cell(user_reward(u, p.context_id, p.preferred, ds.header.specs));
    csv.cell(user_reward(u, p.context_id, p.rejected, ds.header.specs));
    csv.cell(to_string(ds.header.mode));
    csv.end_row();
  }
  csv.save(path);
}

DatasetSplits split_dataset(const PreferenceDataset& ds, double unseen_user_frac,
                            double heldout_context_frac, uint64_t seed) {
  if (unseen_user_frac < 0.0 || unseen_user_frac >= 1.0 || heldout_context_frac <= 0.0 ||
      heldout_context_frac >= 1.0) {
    fail(ErrorKind::invalid_argument, "split_dataset: fractions outside valid range");
  }

  std::vector<int64_t> user_ids;
  for (const SyntheticUser& u : ds.header.users) user_ids.push_back(u.id);
  std::vector<int64_t> context_ids = ds.context_ids();

  Rng user_rng(mix_seed(seed, "user-split"));
  user_rng.shuffle(user_ids);
  Rng ctx_rng(mix_seed(seed, "context-split"));
  ctx_rng.shuffle(context_ids);

  const size_t n_unseen = static_cast<size_t>(
      std::llround(unseen_user_frac * static_cast<double>(user_ids.size())));
  const size_t n_heldout_ctx = std::max<size_t>(
      1, static_cast<size_t>(
             std::llround(heldout_context_frac * static_cast<double>(context_ids.size()))));
  if (n_unseen >= user_ids.size() || n_heldout_ctx >= context_ids.size()) {
    fail(ErrorKind::invalid_argument, "split_dataset: split would empty a partition");
  }

  DatasetSplits splits;
  splits.unseen_users.assign(user_ids.end() - static_cast<long>(n_unseen), user_ids.end());
  splits.train_users.assign(user_ids.begin(), user_ids.end() - static_cast<long>(n_unseen));
  splits.heldout_contexts.assign(context_ids.end() - static_cast<long>(n_heldout_ctx),
                                 context_ids.end());
  splits.train_contexts.assign(context_ids.begin(),
                               context_ids.end() - static_cast<long>(n_heldout_ctx));
  std::sort(splits.train_users.begin(), splits.train_users.end());
  std::sort(splits.unseen_users.begin(), splits.unseen_users.end());
  std::sort(splits.train_contexts.begin(), splits.train_contexts.end());
  std::sort(splits.heldout_contexts.begin(), splits.heldout_contexts.end());

  auto contains = [](const std::vector<int64_t>& v, int64_t x) {
    return std::binary_search(v.begin(), v.end(), x);
  };

  splits.train.header = ds.header;
  splits.seen_test.header = ds.header;
  splits.unseen_test.header = ds.header;
  for (const PreferencePair& p : ds.pairs) {
    const bool unseen_user = contains(splits.unseen_users, p.user_id);
    const bool heldout_ctx = contains(splits.heldout_contexts, p.context_id);
    if (!unseen_user && !heldout_ctx) {
      splits.train.pairs.push_back(p);
    } else if (!unseen_user && heldout_ctx) {
      splits.seen_test.pairs.push_back(p);
    } else if (unseen_user && heldout_ctx) {
      splits.unseen_test.pairs.push_back(p);
    }
    // unseen user x train context: dropped, never touched by any stage
  }
  splits.train.rebuild_index();
  splits.seen_test.rebuild_index();
  splits.unseen_test.rebuild_index();
  return splits;
}

void check_no_leakage(const PreferenceDataset& train, const PreferenceDataset& test) {
  std::set<std::string> seen;
  for (const PreferencePair& p : train.pairs) seen.insert(pair_record_bytes(p));
  for (const PreferencePair& p : test.pairs) {
    if (seen.count(pair_record_bytes(p))) {
      fail(ErrorKind::state_error,
           "split leakage: pair (user " + std::to_string(p.user_id) + ", context " +
               std::to_string(p.context_id) + ") appears in train and test");
    }
  }
}

}  // namespace ppd
