// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sentinel/bench.hpp"
#include "sentinel/core/bands.hpp"
#include "sentinel/feature_schema.hpp"
#include "sentinel/flow_features.hpp"
#include "sentinel/neural/gradient_check.hpp"
#include "sentinel/neural/serialize.hpp"
#include "sentinel/neural/synthetic.hpp"
#include "sentinel/neural/train.hpp"
#include "sentinel/pipeline.hpp"
#include "sentinel/threat_calculator.hpp"

using namespace sentinel;
namespace fs = std::filesystem;

namespace {

const std::string kData = SENTINEL_DATA_DIR;
const fs::path kCorpus = fs::path(__FILE__).parent_path() / "data" / "pattern_corpus.tsv";

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;  // 0: no hard time limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const neural::ModelBundle& default_model() {
  static const auto m = neural::load_model(kData + "/default_model.ssnn");
  return m;
}

// ---- scoring ----------------------------------------------------------------

Outcome final_score_product() {
  std::mt19937_64 rng(20251010);
  std::uniform_real_distribution<double> base(0.0, 100.0), freq(1.0, 3.0), cluster(1.0, 2.0), ip(0.5, 2.0),
      div(1.0, 2.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    FactorBreakdown f{base(rng), freq(rng), cluster(rng), ip(rng), div(rng)};
    const double want = std::min(100.0, f.diversity_factor * f.ip_factor * f.cluster_factor * f.frequency_multiplier *
                                            f.base_score);
    worst = std::max(worst, std::abs(threat::compute_final_score(f) - want));
  }
  const double example = threat::compute_final_score({40.0, 1.5, 1.2, 1.1, 1.0});
  return {worst < 1e-9 && example == 79.2,
          fmt("max |diff| %.3g over 1000 breakdowns; 40*1.5*1.2*1.1*1.0 -> %.17g", worst, example)};
}

Outcome band_scan() {
  int mismatches = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double s = i / 10.0;
    const Band want = s < 30.0 ? Band::Green : s < 70.0 ? Band::Yellow : Band::Red;
    mismatches += map_band(s) != want;
  }
  const bool anchors = map_band(25.0) == Band::Green && map_band(100.0) == Band::Red;
  return {mismatches == 0 && anchors, fmt("%d mismatches over 1001 scores; 25 -> %s, 100 -> %s", mismatches,
                                          std::string(to_string(map_band(25.0))).c_str(),
                                          std::string(to_string(map_band(100.0))).c_str())};
}

// ---- detection --------------------------------------------------------------

Outcome pattern_corpus() {
  std::ifstream in(kCorpus);
  if (!in) return {false, "cannot open " + kCorpus.string()};
  pipeline::Engine engine(default_model());
  std::string line;
  int total = 0, correct = 0;
  std::array<int, kAttackTypeCount> per_label{};
  std::string misses;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const auto want = parse_attack_type(line.substr(0, tab));
    if (!want) return {false, "bad label: " + line.substr(0, tab)};
    ++total;
    ++per_label[static_cast<std::size_t>(*want)];
    try {
      auto step = engine.process_line(line.substr(tab + 1), static_cast<std::uint64_t>(total));
      const auto got = step.verdicts.at(0).verdict.attack_type;
      if (got == *want) {
        ++correct;
      } else if (misses.size() < 200) {
        misses += fmt(" [line %d: %s]", total, std::string(to_string(got)).c_str());
      }
    } catch (const Error& e) {
      misses += fmt(" [line %d: %s]", total, e.what());
    }
  }
  const bool shape = total == 60 && per_label[0] == 15 && per_label[1] == 15 && per_label[2] == 15 && per_label[3] == 15;
  return {shape && correct == total, fmt("%d/%d correct%s", correct, total, misses.c_str())};
}

// ---- neural -----------------------------------------------------------------

Outcome mlp_verification() {
  const auto hash = FeatureSchema().hash();
  const auto params = neural::init_model(hash, 1).parameter_count();

  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  auto random_input = [&] {
    std::vector<double> x(kInputDims);
    for (auto& v : x) v = n(rng);
    return x;
  };
  double worst_grad = 0;
  for (int pair = 0; pair < 20; ++pair) {
    auto m = neural::init_model(hash, 1000 + static_cast<std::uint64_t>(pair));
    auto x = random_input();
    auto r = neural::gradient_check(m, x, pair % 2, 5000 + static_cast<std::uint64_t>(pair));
    worst_grad = std::max(worst_grad, r.max_relative_error);
  }

  const auto path = fs::temp_directory_path() / "sentinel_acceptance_model.ssnn";
  neural::save_model(default_model(), path.string());
  const auto loaded = neural::load_model(path.string());
  fs::remove(path);
  int differing = 0;
  for (int i = 0; i < 100; ++i) {
    auto x = random_input();
    const double a = neural::forward(default_model(), x);
    const double b = neural::forward(loaded, x);
    differing += std::memcmp(&a, &b, sizeof a) != 0;
  }
  return {params == 67'521 && worst_grad < 1e-4 && differing == 0,
          fmt("params %zu; max grad rel err %.3g over 20 pairs; %d/100 outputs differ after reload", params, worst_grad,
              differing)};
}

Outcome synthetic_training() {
  const auto data = neural::make_separable_dataset(5000, kInputDims, 42);
  std::mt19937_64 rng(43);
  const auto split = neural::stratified_split(data, 0.2, rng);
  neural::Dataset train_part;
  for (auto i : split.train) {
    auto row = data.row(i);
    train_part.add(std::vector<double>(row.begin(), row.end()), static_cast<int>(data.labels[i]));
  }
  neural::TrainingConfig cfg;
  cfg.seed = 44;
  auto result = neural::train(neural::init_model(FeatureSchema().hash(), cfg.seed), train_part, cfg);
  const auto m = neural::evaluate_binary(result.model, data, split.validation);
  return {m.f1() >= 0.90, fmt("held-out F1 %.4f (precision %.4f, recall %.4f, %zu rows, %d epochs)", m.f1(),
                              m.precision(), m.recall(), split.validation.size(), result.model.meta.epochs_run)};
}

// ---- flows ------------------------------------------------------------------

PacketRecord packet(bool forward, std::int64_t len, std::int64_t t_us) {
  PacketRecord p;
  p.src_ip = *IpAddress::parse(forward ? "10.1.1.1" : "10.2.2.2");
  p.dst_ip = *IpAddress::parse(forward ? "10.2.2.2" : "10.1.1.1");
  p.src_port = forward ? 1234 : 443;
  p.dst_port = forward ? 443 : 1234;
  p.length_bytes = len;
  p.timestamp = from_micros(t_us);
  return p;
}

struct TwoPass {
  double mean = 0, std = 0, min = 0, max = 0;
};

TwoPass two_pass(const std::vector<double>& xs) {
  TwoPass r;
  if (xs.empty()) return r;
  double s = 0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size()));
  r.min = *std::min_element(xs.begin(), xs.end());
  r.max = *std::max_element(xs.begin(), xs.end());
  return r;
}

double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

Outcome flow_statistics() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_dist(1, 300);
  std::uniform_int_distribution<std::int64_t> len_dist(0, 65535), gap_dist(0, 3'000'000);
  double worst = 0;
  for (int f = 0; f < 1000; ++f) {
    const int n = n_dist(rng);
    std::optional<flow::FlowState> s;
    std::vector<double> all, fwd, bwd;
    std::int64_t t = 0;
    for (int i = 0; i < n; ++i) {
      const bool forward = i == 0 || (rng() & 1);
      const auto len = len_dist(rng);
      if (i > 0) t += gap_dist(rng);
      s = flow::update_flow(s, packet(forward, len, t));
      all.push_back(static_cast<double>(len));
      (forward ? fwd : bwd).push_back(static_cast<double>(len));
    }
    const auto v = flow::finalize_flow(*s);
    const auto a = two_pass(all), fa = two_pass(fwd), ba = two_pass(bwd);
    double total = 0;
    for (double x : all) total += x;
    const double dur = static_cast<double>(t) / 1e6, eff = std::max(dur, flow::kMinRateDurationS);
    const std::pair<double, double> pairs[] = {
        {v[0], dur},         {v[1], double(fwd.size())}, {v[2], double(bwd.size())}, {v[3], a.mean},
        {v[4], a.max},       {v[5], a.min},              {v[6], a.std},              {v[7], total / eff},
        {v[8], n / eff},     {v[17], fa.mean},           {v[18], fa.std},            {v[19], ba.mean},
        {v[20], ba.std},     {v[21], total}};
    for (auto [got, want] : pairs) worst = std::max(worst, rel_err(got, want));
  }
  auto two = flow::update_flow(std::nullopt, packet(true, 100, 0));
  two = flow::update_flow(two, packet(true, 300, 2'000'000));
  const auto v = flow::finalize_flow(two);
  const bool example = v[3] == 200.0 && v[6] == 100.0 && v[7] == 200.0;
  return {worst < 1e-9 && example,
          fmt("max rel err %.3g over 1000 flows; two-packet mean %g std %g bytes/s %g", worst, v[3], v[6], v[7])};
}

// ---- throughput and memory --------------------------------------------------

struct BatchRun {
  bool ok = false;
  std::string error;
  std::uint64_t parsed = 0, logs_assessed = 0;
  double wall_s = 0, peak_mb = 0;
};

const BatchRun& batch_run() {
  static const BatchRun run = [] {
    BatchRun r;
    const auto path = fs::temp_directory_path() / "sentinel_acceptance_100k.log";
    {
      auto w = bench::generate_workload({100'000, 2025});
      bench::write_lines(w.lines, path.string());
    }
    ::malloc_trim(0);
    try {
      bench::MemorySampler memory(std::chrono::milliseconds(20));
      const auto t0 = std::chrono::steady_clock::now();
      {
        pipeline::Pipeline p(default_model(), {});
        ingest::ReplayPlan plan;
        plan.source_path = path.string();
        r.parsed = p.replay(plan).parsed;
        p.drain();
        r.logs_assessed = p.snapshot().counters.logs_assessed;
      }
      r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.peak_mb = static_cast<double>(std::max(memory.stop(), bench::peak_rss_bytes())) / (1024.0 * 1024.0);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    fs::remove(path);
    return r;
  }();
  return run;
}

Outcome throughput() {
  const auto& b = batch_run();
  if (!b.ok) return {false, "batch run failed: " + b.error};
  const double rate = static_cast<double>(b.logs_assessed) / b.wall_s;

  auto w = bench::generate_workload({5'000, 7});
  const auto path = fs::temp_directory_path() / "sentinel_acceptance_steady.log";
  bench::write_lines(w.lines, path.string());
  pipeline::Pipeline p(default_model(), {});
  ingest::ReplayPlan plan;
  plan.source_path = path.string();
  plan.mode = ingest::Steady{500.0};
  p.replay(plan);
  p.drain();
  fs::remove(path);
  const auto lat = p.latency();
  const bool batch_ok = b.parsed == 100'000 && b.logs_assessed == 100'000 && rate >= 5000.0;
  const bool steady_ok = lat.count > 0 && lat.p99 < 1.0;
  return {batch_ok && steady_ok, fmt("BATCH 100000 events in %.2f s = %.0f ev/s; STEADY 500 ev/s p99 %.2f ms over %zu "
                                     "assessments (max %.2f ms)",
                                     b.wall_s, rate, lat.p99 * 1e3, lat.count, lat.max * 1e3)};
}

Outcome memory() {
  const auto& b = batch_run();
  if (!b.ok) return {false, "batch run failed: " + b.error};
  return {b.peak_mb < 64.0, fmt("peak RSS %.1f MB during the 100K batch", b.peak_mb)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"final score is the capped factor product", 1, final_score_product},
      {"band mapping over 0.0-100.0", 1, band_scan},
      {"pattern corpus classified", 1, pattern_corpus},
      {"MLP size, gradients and persistence", 30, mlp_verification},
      {"synthetic training reaches F1 >= 0.90", 300, synthetic_training},
      {"streaming flow statistics", 5, flow_statistics},
      {"throughput (BATCH >= 5000 ev/s, STEADY p99 < 1 s)", 0, throughput},
      {"memory (peak RSS < 64 MB)", 0, memory},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && s > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " -- " << o.detail << fmt(" (%.2f s)", s) << std::endl;
  }
  std::cout << (failed ? fmt("%d criteria failed", failed) : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
