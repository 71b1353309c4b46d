#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "enginefault/dataset.hpp"
#include "enginefault/errors.hpp"
#include "enginefault/preprocess.hpp"
#include "enginefault/testbed.hpp"
#include "testutil.hpp"

using namespace enginefault;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ef_ds_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Builds a small corpus + window store once per tag and loads it.
LabeledWindowSet make_store(const fs::path& base, int runs_per_class, int duration_s) {
  CorpusConfig cc;
  cc.out_dir = (base / "corpus").string();
  cc.runs_per_class = runs_per_class;
  cc.duration_s = duration_s;
  cc.seed = 77;
  generate_dataset(cc);
  PreprocessConfig pc;
  pc.corpus_dir = cc.out_dir;
  pc.out_dir = (base / "store").string();
  pc.frame_len = duration_s;
  pc.window_len = 64;
  pc.stride = 32;
  preprocess_corpus(pc);
  return load_window_store(base / "store");
}

}  // namespace

TEST_CASE("window store round-trips through load") {
  TempDir tmp("load");
  auto set = make_store(tmp.path, 3, 300);
  CHECK(set.window_len == 64);
  CHECK(set.channels == 27);
  CHECK(set.runs.size() == 36);
  CHECK(set.count() == 36 * 8);
  CHECK(set.features.size() == set.count() * 64 * 27);
  CHECK(set.step_labels.size() == set.count() * 64);

  // spans tile [0, N)
  std::size_t covered = 0;
  for (const auto& span : set.runs) {
    CHECK(span.first == covered);
    covered += span.count;
  }
  CHECK(covered == set.count());

  // fault-free windows are labeled 0; every faulty run has a nonzero window
  for (const auto& span : set.runs) {
    bool any_fault = false;
    for (std::size_t w = 0; w < span.count; ++w)
      if (set.labels[span.first + w] != 0) any_fault = true;
    if (span.fault_id == 0)
      CHECK(!any_fault);
    else
      CHECK(any_fault);
  }
}

TEST_CASE("get_sample matches raw buffers and bounds-checks") {
  TempDir tmp("sample");
  auto set = make_store(tmp.path, 3, 300);
  auto s = get_sample(set, 13);
  CHECK(s.window.size() == 64u * 27u);
  CHECK(s.step_targets.size() == 64u);
  CHECK(s.label == set.labels[13]);
  CHECK(s.label == s.step_targets.back());
  for (int i = 0; i < 64 * 27; i += 101)
    CHECK(s.window[static_cast<std::size_t>(i)] ==
          static_cast<double>(set.features[13u * 64 * 27 + static_cast<std::size_t>(i)]));
  CHECK_THROWS_AS((void)get_sample(set, set.count()), IndexError);
}

TEST_CASE("split keeps runs whole and parts disjoint") {
  TempDir tmp("split");
  auto set = make_store(tmp.path, 5, 300);
  auto split = split_dataset(set, {}, 9);

  CHECK(split.train.size() + split.val.size() + split.test.size() == set.count());
  std::set<std::size_t> seen;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (auto idx : *part) CHECK(seen.insert(idx).second);
  CHECK(seen.size() == set.count());
  CHECK(*seen.rbegin() == set.count() - 1);

  // run granularity: each run's whole span lands in exactly one part
  std::map<std::string, const RunSpan*> spans;
  for (const auto& span : set.runs) spans[span.id] = &span;
  auto covers = [&](const std::vector<std::string>& runs, const std::vector<std::size_t>& windows) {
    std::set<std::size_t> want;
    for (const auto& id : runs) {
      const auto* span = spans.at(id);
      for (std::size_t w = 0; w < span->count; ++w) want.insert(span->first + w);
    }
    std::set<std::size_t> got(windows.begin(), windows.end());
    CHECK(want == got);
  };
  covers(split.train_runs, split.train);
  covers(split.val_runs, split.val);
  covers(split.test_runs, split.test);

  // stratification: 5 runs per class -> 3/1/1
  for (int cls = 0; cls < 12; ++cls) {
    auto count_cls = [&](const std::vector<std::string>& runs) {
      return std::count_if(runs.begin(), runs.end(), [&](const std::string& id) {
        return spans.at(id)->fault_id == cls;
      });
    };
    CHECK(count_cls(split.train_runs) == 3);
    CHECK(count_cls(split.val_runs) == 1);
    CHECK(count_cls(split.test_runs) == 1);
  }
}

TEST_CASE("split is deterministic in seed and sensitive to it") {
  TempDir tmp("seed");
  auto set = make_store(tmp.path, 4, 300);
  auto a = split_dataset(set, {}, 5);
  auto b = split_dataset(set, {}, 5);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train_runs == b.train_runs);

  bool any_diff = false;
  for (std::uint64_t s = 6; s < 12 && !any_diff; ++s)
    any_diff = split_dataset(set, {}, s).train_runs != a.train_runs;
  CHECK(any_diff);
}

TEST_CASE("split validates ratios and run counts") {
  TempDir tmp("ratios");
  auto set = make_store(tmp.path, 3, 300);
  CHECK_THROWS_AS((void)split_dataset(set, {0.7, 0.3, 0.0}, 1), InvalidArgumentError);
  CHECK_THROWS_AS((void)split_dataset(set, {0.7, 0.2, 0.2}, 1), InvalidArgumentError);
  CHECK_THROWS_AS((void)split_dataset(set, {-0.1, 0.6, 0.5}, 1), InvalidArgumentError);
  // 3 runs per class is the minimum; works, one run per part
  auto split = split_dataset(set, {}, 1);
  CHECK(split.train_runs.size() == 12);
  CHECK(split.val_runs.size() == 12);
  CHECK(split.test_runs.size() == 12);

  // drop one run of class 2 below the minimum
  LabeledWindowSet crippled = set;
  std::vector<RunSpan> keep;
  int removed = 0;
  for (const auto& span : crippled.runs) {
    if (span.fault_id == 2 && removed == 0) {
      ++removed;
      continue;
    }
    keep.push_back(span);
  }
  crippled.runs = keep;
  CHECK_THROWS_WITH_AS((void)split_dataset(crippled, {}, 1),
                       doctest::Contains("class 2"), Error);
}

TEST_CASE("split file round-trips") {
  TempDir tmp("file");
  auto set = make_store(tmp.path, 4, 300);
  auto split = split_dataset(set, {}, 123);
  const auto path = tmp.path / "split.json";
  save_split(split, path);
  auto loaded = load_split(set, path);
  CHECK(loaded.seed == split.seed);
  CHECK(loaded.train == split.train);
  CHECK(loaded.val == split.val);
  CHECK(loaded.test == split.test);
  CHECK(loaded.train_runs == split.train_runs);
  CHECK(loaded.ratios.val == doctest::Approx(0.15));

  CHECK_THROWS_AS((void)load_split(set, tmp.path / "absent.json"), IoError);
}

TEST_CASE("make_batches covers each index exactly once per epoch") {
  std::vector<std::size_t> part;
  for (std::size_t i = 0; i < 105; ++i) part.push_back(i * 3);
  RngState rng(4);

  auto batches = make_batches(part, 32, true, rng);
  CHECK(batches.size() == 4);
  CHECK(batches[0].size() == 32);
  CHECK(batches[3].size() == 9);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  CHECK(seen == std::multiset<std::size_t>(part.begin(), part.end()));

  // shuffle off: ascending enumeration regardless of input order
  std::vector<std::size_t> scrambled(part.rbegin(), part.rend());
  auto plain = make_batches(scrambled, 32, false, rng);
  std::vector<std::size_t> flat;
  for (const auto& b : plain) flat.insert(flat.end(), b.begin(), b.end());
  CHECK(std::is_sorted(flat.begin(), flat.end()));
  CHECK(flat.size() == part.size());
}

TEST_CASE("make_batches shuffling is seeded") {
  std::vector<std::size_t> part(50);
  for (std::size_t i = 0; i < part.size(); ++i) part[i] = i;
  RngState r1(9), r2(9), r3(10);
  auto a = make_batches(part, 8, true, r1);
  auto b = make_batches(part, 8, true, r2);
  auto c = make_batches(part, 8, true, r3);
  CHECK(a == b);
  CHECK(a != c);
  CHECK_THROWS_AS((void)make_batches(part, 0, false, r1), InvalidArgumentError);
}

TEST_CASE("gather_batch stacks windows with both target views") {
  TempDir tmp("gather");
  auto set = make_store(tmp.path, 3, 300);
  std::vector<std::size_t> idx{0, 9, 17};
  auto batch = gather_batch(set, idx);
  CHECK(batch.x.shape() == std::vector<int>{3, 64, 27});
  CHECK_FALSE(batch.x.requires_grad());
  CHECK(batch.step_targets.size() == 3u * 64u);
  CHECK(batch.window_targets.size() == 3u);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    auto s = get_sample(set, idx[b]);
    CHECK(batch.window_targets[b] == s.label);
    for (int t = 0; t < 64; ++t)
      CHECK(batch.step_targets[b * 64 + static_cast<std::size_t>(t)] ==
            s.step_targets[static_cast<std::size_t>(t)]);
    for (std::size_t i = 0; i < 64u * 27u; i += 97)
      CHECK(batch.x.values()[b * 64 * 27 + i] == s.window[i]);
  }
  CHECK_THROWS_AS((void)gather_batch(set, {}), InvalidArgumentError);
  CHECK_THROWS_AS((void)gather_batch(set, {set.count()}), IndexError);
}
