// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "confrag/config.hpp"
#include "confrag/data.hpp"
#include "confrag/fragmentation.hpp"
#include "confrag/log.hpp"
#include "confrag/metrics.hpp"
#include "confrag/netcore.hpp"
#include "confrag/pipeline.hpp"
#include "confrag/random.hpp"
#include "confrag/selection.hpp"

using namespace confrag;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// All perfect matchings via permutations, canonicalized and sorted.
std::set<Matching> brute_matchings(int F) {
  std::vector<int> perm(static_cast<std::size_t>(F));
  std::iota(perm.begin(), perm.end(), 0);
  std::set<Matching> out;
  do {
    Matching m;
    for (int k = 0; k < F; k += 2) m.emplace_back(std::min(perm[k], perm[k + 1]), std::max(perm[k], perm[k + 1]));
    std::sort(m.begin(), m.end());
    out.insert(m);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

Matching brute_select(const std::set<Matching>& all, const Eigen::MatrixXd& w) {
  const Matching* best = nullptr;
  double best_min = 0.0, best_total = 0.0;
  for (const Matching& m : all) {
    double lo = INFINITY, total = 0.0;
    for (auto [a, b] : m) {
      lo = std::min(lo, w(a, b));
      total += w(a, b);
    }
    if (!best || lo > best_min || (lo == best_min && total > best_total)) {
      best = &m;
      best_min = lo;
      best_total = total;
    }
  }
  return *best;
}

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> coarse(0, 3);
  bool ok = true;
  std::string counts;
  for (int F : {4, 6, 8}) {
    const auto enumerated = enumerate_perfect_matchings(F);
    const auto all = brute_matchings(F);
    counts += fmt("F=%d:%zu ", F, enumerated.size());
    ok &= enumerated.size() == all.size();
    ok &= std::equal(enumerated.begin(), enumerated.end(), all.begin(), all.end());
    for (int rep = 0; rep < 100; ++rep) {
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(F, F);
      for (int a = 0; a < F; ++a) {
        for (int b = a + 1; b < F; ++b) w(a, b) = w(b, a) = rep % 2 ? u(gen) : coarse(gen);  // odd reps: ties
      }
      ok &= select_contrastive_pairing(w).pairs() == brute_select(all, w);
    }
  }
  const double secs = seconds_since(t0);
  ok &= secs < 5.0;
  report(1, ok, counts + fmt("(expected 3/15/105), 300 selections vs brute force, %.2fs", secs));
}

void criterion_2() {
  auto evenly = [](double lo, double hi, int n) {
    std::vector<Sample> s;
    for (int i = 0; i < n; ++i) {
      double y = lo + (hi - lo) * i / (n - 1);
      s.push_back(Sample{{y}, y, y});
    }
    return Dataset(std::move(s));
  };
  Dataset d4 = evenly(0, 100, 401), d6 = evenly(0, 60, 601);
  std::string p4 = to_string(select_contrastive_pairing(fragment_edge_weights(d4, fragment_labels(d4, 4))).pairs());
  std::string p6 = to_string(select_contrastive_pairing(fragment_edge_weights(d6, fragment_labels(d6, 6))).pairs());
  report(2, p4 == "(1,3),(2,4)" && p6 == "(1,4),(2,5),(3,6)", "F=4 " + p4 + ", F=6 " + p6);
}

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<std::size_t> width(1, 8), depth(1, 3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    NetSpec spec;
    spec.input_dim = width(gen);
    spec.hidden_dims.assign(depth(gen), 0);
    for (auto& h : spec.hidden_dims) h = width(gen);
    spec.output_dim = width(gen) % 3 + 1;
    spec.activation = rep % 2 ? Activation::tanh : Activation::relu;
    spec.seed = 300 + static_cast<std::uint64_t>(rep);
    Net net = net_init(spec);
    for (Loss loss : {Loss::mse, Loss::bce_logits}) {
      Batch b{Eigen::MatrixXd(8, static_cast<Eigen::Index>(spec.input_dim)),
              Eigen::MatrixXd(8, static_cast<Eigen::Index>(spec.output_dim))};
      for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = z(gen);
      for (Eigen::Index i = 0; i < b.targets.size(); ++i) {
        b.targets.data()[i] = loss == Loss::mse ? z(gen) : (coin(gen) ? 1.0 : 0.0);
      }
      worst = std::max(worst, grad_check(net, b, loss, 1e-5));
    }
  }
  const double secs = seconds_since(t0);
  report(3, worst < 1e-4 && secs < 10.0, fmt("max relative error %.3g over 20 nets x 2 losses, %.2fs", worst, secs));
}

void criterion_4() {
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::bernoulli_distribution coin(0.4);
  std::vector<Sample> base, moved;
  std::vector<std::size_t> all, clean, some;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double gt = u(gen), y = coin(gen) ? u(gen) : gt;
    base.push_back(Sample{{0.0}, y, gt});
    moved.push_back(Sample{{0.0}, 2 * y + 5, 2 * gt + 5});
    all.push_back(i);
    if (y == gt) clean.push_back(i);
    if (i % 3) some.push_back(i);
  }
  Dataset d(base), dm(moved);
  const double e_all = *err(all, d), e_clean = *err(clean, d);
  const double shift = std::abs(*err(some, d) - *err(some, dm));
  const double rate = selection_rate(all, d), m = mrae(3.7, 3.7);
  const bool ok = e_all == 1.0 && e_clean == 0.0 && m == 0.0 && rate == 1.0 && shift <= 1e-12;
  report(4, ok,
         fmt("ERR(all)=%g ERR(clean)=%g MRAE(rho,rho)=%g rate(all)=%g affine shift=%.2g", e_all, e_clean, m, rate,
             shift));
}

void criterion_5() {
  std::mt19937_64 gen(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_sum = 0.0;
  int argmax_misses = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int F = 4 + 2 * static_cast<int>(u(gen) * 5);
    const double lo = -50 + 100 * u(gen), hi = lo + 1 + 200 * u(gen);
    FragmentationScheme s;
    s.fragments = F;
    for (int f = 0; f <= F; ++f) s.boundaries.push_back(lo + (hi - lo) * f / F);
    for (int f = 0; f < F; ++f) {
      s.means.push_back(lo + (hi - lo) * (f + u(gen)) / F);
      s.counts.push_back(1);
    }
    const double y = rep % 10 == 0 ? s.means[rep % F] : lo + (hi - lo) * u(gen);  // some exact hits
    const std::vector<double> rho = fragment_prior(y, s);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(rho.begin(), rho.end(), 0.0) - 1.0));
    std::size_t nearest = 0;
    for (std::size_t f = 1; f < s.means.size(); ++f) {
      if (std::abs(y - s.means[f]) < std::abs(y - s.means[nearest])) nearest = f;
    }
    argmax_misses += static_cast<std::size_t>(std::max_element(rho.begin(), rho.end()) - rho.begin()) != nearest;
  }
  report(5, worst_sum <= 1e-12 && argmax_misses == 0,
         fmt("max |sum-1|=%.2g, argmax misses %d of 1000", worst_sum, argmax_misses));
}

void criterion_6() {
  const std::vector<double> half(10000, 0.5), zero(10000, 0.0);
  const auto pred = sample_selection(half, zero, 6, 1, SelectionCombine::pred_only);
  const auto repr = sample_selection(zero, half, 6, 1, SelectionCombine::repr_only);
  const double rp = pred.selected.size() / 10000.0, rr = repr.selected.size() / 10000.0;
  const bool ok = rp >= 0.48 && rp <= 0.52 && rr >= 0.48 && rr <= 0.52;
  report(6, ok, fmt("selection rate %.4f (pred), %.4f (repr)", rp, rr));
}

ExperimentConfig benchmark_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  SyntheticSource syn;
  syn.n = 2000;
  syn.d = 2;
  syn.seed = seed;
  cfg.source = syn;
  cfg.noise = NoiseSpec::symmetric(0.4, seed);
  cfg.fragments = 4;
  cfg.jitter = 0.05;
  cfg.knn_k = 5;
  cfg.epochs = 100;
  cfg.seed = seed;
  cfg.write_selection = false;
  return cfg;
}

struct SeedResults {
  MetricsReport confrag, vanilla, no_jitter, adjacent, regressor_variant;
  double random_err = 0.0;
};

double random_subset_err(const RunResult& r) {
  std::vector<std::size_t> idx(r.train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(r.config.seed, Stream::random_subset));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(r.final_selection.size());
  std::sort(idx.begin(), idx.end());
  return *err(idx, r.train);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* line(const MetricsReport& m) {
  static char buf[128];
  std::snprintf(buf, sizeof(buf), "ERR %.4f MAE %.3f rate %.3f", m.err.value_or(NAN), m.mae, m.selection_rate);
  return buf;
}

void run_benchmarks() {
  const std::uint64_t seeds[] = {0, 1, 2};
  const fs::path out = fs::temp_directory_path() / "confrag_acceptance";
  fs::remove_all(out);
  std::vector<SeedResults> results;
  for (std::uint64_t seed : seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedResults s;
    ExperimentConfig cfg = benchmark_config(seed);
    RunOptions opts;
    if (seed == 0) opts.output_dir = out / "first";
    RunResult main_run = run_experiment(cfg, opts);
    s.confrag = main_run.final_metrics();
    s.random_err = random_subset_err(main_run);

    ExperimentConfig v = cfg;
    v.mode = Mode::vanilla;
    s.vanilla = run_experiment(v).final_metrics();
    ExperimentConfig j0 = cfg;
    j0.jitter = 0.0;
    s.no_jitter = run_experiment(j0).final_metrics();
    ExperimentConfig adj = cfg;
    adj.pairing_override = parse_matching("1-2,3-4");
    s.adjacent = run_experiment(adj).final_metrics();
    ExperimentConfig rv = cfg;
    rv.mode = Mode::confrag_r;
    s.regressor_variant = run_experiment(rv).final_metrics();

    std::printf("  seed %llu (%.0fs)\n", static_cast<unsigned long long>(seed), seconds_since(t0));
    std::printf("    confrag    %s | random-subset ERR %.4f\n", line(s.confrag), s.random_err);
    std::printf("    vanilla    %s\n", line(s.vanilla));
    std::printf("    J=0        %s\n", line(s.no_jitter));
    std::printf("    adjacent   %s\n", line(s.adjacent));
    std::printf("    confrag-R  %s\n", line(s.regressor_variant));
    std::fflush(stdout);
    results.push_back(s);
  }

  auto count = [&](const std::function<bool(const SeedResults&)>& pred) {
    return static_cast<int>(std::count_if(results.begin(), results.end(), pred));
  };
  const int c7 = count([](const SeedResults& s) {
    const double e = *s.confrag.err;
    return e <= 0.7 && e <= 0.9 * s.random_err && s.confrag.selection_rate >= 0.4 &&
           s.confrag.mae <= 0.85 * s.vanilla.mae;
  });
  report(7, c7 >= 2, fmt("all four targets met in %d of 3 seeds", c7));
  const int c8 = count([](const SeedResults& s) { return *s.confrag.err <= *s.no_jitter.err; });
  report(8, c8 >= 2, fmt("ERR(J=0.05) <= ERR(J=0) in %d of 3 seeds", c8));
  const int c9 = count([](const SeedResults& s) { return *s.confrag.err <= *s.adjacent.err; });
  report(9, c9 >= 2, fmt("ERR(contrastive) <= ERR(adjacent) in %d of 3 seeds", c9));
  const int c10 = count([](const SeedResults& s) { return s.confrag.mae <= s.regressor_variant.mae; });
  report(10, c10 >= 2, fmt("MAE(ConFrag) <= MAE(ConFrag-R) in %d of 3 seeds", c10));

  RunOptions again;
  again.output_dir = out / "second";
  run_experiment(benchmark_config(0), again);
  const std::string a = slurp(out / "first" / kMetricsFile), b = slurp(out / "second" / kMetricsFile);
  report(11, !a.empty() && a == b, fmt("metrics.jsonl %zu bytes, identical: %s", a.size(), a == b ? "yes" : "no"));
}

}  // namespace

int main() {
  log::set_sink([](const std::string&) {});
  try {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    run_benchmarks();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
