// sentinel: command-line front end.
//
//   sentinel serve --config <path>
//   sentinel replay <path> (--rate N | --batch) [--loop K]
//   sentinel train --data <path> --out <model>
//   sentinel bench --events N --mode steady|batch
//   sentinel score --line "<apache log line>"
//   sentinel gen-data --out <path> --events N [--kind log|dataset|synthetic]
//   sentinel compare --primary <report.json> --reference <report.json>
//   sentinel schema

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "sentinel/bench.hpp"
#include "sentinel/feature_schema.hpp"
#include "sentinel/neural/dataset_io.hpp"
#include "sentinel/neural/serialize.hpp"
#include "sentinel/neural/synthetic.hpp"
#include "sentinel/neural/train.hpp"
#include "sentinel/pipeline.hpp"
#include "sentinel/service.hpp"

using namespace sentinel;

namespace {

const std::string kDefaultModel = std::string(SENTINEL_DATA_DIR) + "/default_model.ssnn";

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

void write_output(const Json& j, const std::string& out_path) {
  std::cout << j.dump(2) << '\n';
  if (out_path.empty()) return;
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error("cannot write " + out_path);
  out << j.dump(2) << '\n';
}

http::Ruleset load_rules(const std::string& path) {
  return path.empty() ? http::Ruleset::builtin() : http::Ruleset::load(path);
}

Json named_http_features(const http::HttpFeatureVector& h) {
  Json j = Json::object();
  const auto a = h.to_array();
  for (std::size_t i = 0; i < http::kHttpDims; ++i) j[std::string(http::kHttpFeatureNames[i])] = a[i];
  return j;
}

int cmd_serve(const std::string& config_path) {
  auto cfg = service::load_service_config(config_path);
  service::Service svc(cfg);
  svc.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on http://" << cfg.host << ":" << svc.port() << '\n';
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cerr << "shutting down\n";
  svc.stop();
  return 0;
}

int cmd_replay(const std::string& path, std::optional<double> rate, int loop, const std::string& model_path,
               const std::string& rules_path, const std::string& out_path) {
  ingest::ReplayPlan plan;
  plan.source_path = path;
  plan.loop_count = loop;
  if (rate) plan.mode = ingest::Steady{*rate};
  pipeline::Pipeline p(neural::load_model(model_path), {}, load_rules(rules_path));
  const auto report = p.replay(plan);
  p.drain();
  const auto lat = p.latency();
  Json j{{"replay", report},
         {"metrics", service::metrics_json(p.snapshot())},
         {"status", service::status_json(p.snapshot())},
         {"assessments", p.assessments_emitted()},
         {"latency_s", {{"count", lat.count}, {"mean", lat.mean}, {"p50", lat.p50}, {"p99", lat.p99}, {"max", lat.max}}}};
  write_output(j, out_path);
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out, neural::TrainingConfig cfg,
              const std::string& rules_path) {
  auto data = neural::load_dataset_jsonl(data_path);
  if (data.dims != kInputDims)
    throw SchemaMismatch("dataset rows have " + std::to_string(data.dims) + " features, the schema has " +
                         std::to_string(kInputDims));
  const FeatureSchema schema(load_rules(rules_path));
  auto result = neural::train(neural::init_model(schema.hash(), cfg.seed), data, cfg);
  neural::save_model(result.model, out);

  std::mt19937_64 rng(cfg.seed);
  const auto split = neural::stratified_split(data, cfg.validation_fraction, rng);
  const auto m = neural::evaluate_binary(result.model, data, split.validation);
  Json history = Json::array();
  for (const auto& h : result.history) history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}});
  Json j{{"model", out},
         {"rows", data.size()},
         {"epochs_run", result.model.meta.epochs_run},
         {"best_epoch", result.best_epoch},
         {"best_val_loss", result.model.meta.best_val_loss},
         {"early_stopped", result.early_stopped},
         {"validation", {{"precision", m.precision()}, {"recall", m.recall()}, {"f1", m.f1()}}},
         {"history", std::move(history)}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_bench(std::size_t events, const std::string& mode, double rate, std::uint64_t seed, const std::string& engine_id,
              const std::string& model_path, const std::string& out_path) {
  bench::BenchWorkload load;
  if (mode == "steady")
    load = bench::SteadyLoad{rate, static_cast<double>(events) / rate};
  else
    load = bench::BatchLoad{events};
  if (engine_id == "reference") bench::run_reference_bench(load);
  const auto w = bench::generate_workload({events, seed});
  pipeline::Engine engine(neural::load_model(model_path));
  auto report = bench::run_bench(engine, w.lines, load);
  write_output(Json(report), out_path);
  return 0;
}

int cmd_score(const std::string& line, const std::string& model_path, const std::string& rules_path) {
  const auto rules = load_rules(rules_path);
  pipeline::Engine engine(neural::load_model(model_path), rules);
  const auto req = ingest::parse_apache_line(line, 1);
  const auto step = engine.process(RawEvent{req});
  const auto& v = step.verdicts.at(0).verdict;
  Json j{{"record", req}, {"http_features", named_http_features(http::extract_http_features(req, rules))},
         {"verdict", v}};
  if (step.assessments.empty()) {
    j["assessment"] = nullptr;
    j["final_score"] = 0.0;
    j["band"] = Band::Green;
  } else {
    const auto& a = step.assessments.front();
    j["assessment"] = a;
    j["final_score"] = a.final_score;
    j["band"] = a.band;
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_gen_data(const std::string& kind, const std::string& out, std::size_t events, std::uint64_t seed,
                 const std::string& rules_path) {
  Json summary{{"kind", kind}, {"out", out}, {"rows", events}, {"seed", seed}};
  if (kind == "log") {
    auto w = bench::generate_workload({events, seed});
    bench::write_lines(w.lines, out);
    summary["attacks"] = w.attacks();
  } else if (kind == "dataset") {
    auto w = bench::generate_workload({events, seed});
    neural::save_dataset_jsonl(bench::workload_dataset(w, load_rules(rules_path)), out);
    summary["attacks"] = w.attacks();
  } else {
    neural::save_dataset_jsonl(neural::make_separable_dataset(events, kInputDims, seed), out);
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

std::vector<bench::BenchReport> read_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  auto j = Json::parse(in);
  std::vector<bench::BenchReport> out;
  if (j.is_array())
    for (const auto& r : j) out.push_back(r.get<bench::BenchReport>());
  else
    out.push_back(j.get<bench::BenchReport>());
  return out;
}

int cmd_compare(const std::string& primary, const std::string& reference, const std::string& out_path) {
  const auto rows = bench::compare(read_reports(primary), read_reports(reference));
  std::cout << bench::comparison_table(rows);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error("cannot write " + out_path);
    out << bench::comparison_json(rows).dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sentinel: security event analytics engine"};
  app.set_help_all_flag("--help-all", "Expand all help");

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "Service config (JSON)")->required()->check(CLI::ExistingFile);

  std::string replay_path, model_path = kDefaultModel, rules_path, out_path;
  std::optional<double> rate;
  bool batch = false;
  int loop = 1;
  auto* replay = app.add_subcommand("replay", "Replay a log or JSONL file through the pipeline");
  replay->add_option("path", replay_path, "Input file")->required()->check(CLI::ExistingFile);
  auto* rate_opt = replay->add_option("--rate", rate, "Events per second (STEADY)")->check(CLI::PositiveNumber);
  auto* batch_opt = replay->add_flag("--batch", batch, "Emit as fast as the pipeline accepts");
  rate_opt->excludes(batch_opt);
  replay->add_option("--loop", loop, "Passes over the file")->check(CLI::PositiveNumber);
  replay->add_option("--model", model_path, "Model file");
  replay->add_option("--rules", rules_path, "Ruleset file");
  replay->add_option("--out", out_path, "Also write the report here");

  std::string data_path, train_out;
  neural::TrainingConfig tcfg;
  auto* train = app.add_subcommand("train", "Train a detector model from a JSONL dataset");
  train->add_option("--data", data_path, "Dataset (JSONL of {features, label})")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Model output path")->required();
  train->add_option("--seed", tcfg.seed, "Seed");
  train->add_option("--max-epochs", tcfg.max_epochs, "Epoch limit")->check(CLI::PositiveNumber);
  train->add_option("--patience", tcfg.early_stop_patience, "Early-stop patience")->check(CLI::PositiveNumber);
  train->add_option("--rules", rules_path, "Ruleset the features were extracted with");

  std::size_t events = 1000;
  std::string mode = "batch", engine_id = "primary";
  double bench_rate = 500.0;
  std::uint64_t seed = 1;
  auto* bench_cmd = app.add_subcommand("bench", "Time the analytic path on a generated workload");
  bench_cmd->add_option("--events", events, "Event count")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--mode", mode, "steady | batch")->check(CLI::IsMember({"steady", "batch"}));
  bench_cmd->add_option("--rate", bench_rate, "Events per second in steady mode")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", seed, "Workload seed");
  bench_cmd->add_option("--engine", engine_id, "primary | reference")->check(CLI::IsMember({"primary", "reference"}));
  bench_cmd->add_option("--model", model_path, "Model file");
  bench_cmd->add_option("--out", out_path, "Also write the report here");

  std::string line;
  auto* score = app.add_subcommand("score", "Score one Apache log line on a fresh state");
  score->add_option("--line", line, "Log line")->required();
  score->add_option("--model", model_path, "Model file");
  score->add_option("--rules", rules_path, "Ruleset file");

  std::string gen_kind = "log", gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a generated workload or dataset");
  gen->add_option("--out", gen_out, "Output path")->required();
  gen->add_option("--events", events, "Rows")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--kind", gen_kind, "log | dataset | synthetic")->check(CLI::IsMember({"log", "dataset", "synthetic"}));
  gen->add_option("--rules", rules_path, "Ruleset for dataset features");

  std::string primary_report, reference_report;
  auto* cmp = app.add_subcommand("compare", "Compare primary and reference bench reports");
  cmp->add_option("--primary", primary_report, "Primary report(s) JSON")->required()->check(CLI::ExistingFile);
  cmp->add_option("--reference", reference_report, "Reference report(s) JSON")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out_path, "Write the comparison JSON here");

  auto* schema = app.add_subcommand("schema", "Print the feature schema manifest");
  schema->add_option("--rules", rules_path, "Ruleset file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*serve) return cmd_serve(config_path);
    if (*replay) {
      if (!rate && !batch) {
        std::cerr << "replay: one of --rate or --batch is required\n";
        return 2;
      }
      return cmd_replay(replay_path, rate, loop, model_path, rules_path, out_path);
    }
    if (*train) return cmd_train(data_path, train_out, tcfg, rules_path);
    if (*bench_cmd) return cmd_bench(events, mode, bench_rate, seed, engine_id, model_path, out_path);
    if (*score) return cmd_score(line, model_path, rules_path);
    if (*gen) return cmd_gen_data(gen_kind, gen_out, events, seed, rules_path);
    if (*cmp) return cmd_compare(primary_report, reference_report, out_path);
    if (*schema) {
      std::cout << FeatureSchema(load_rules(rules_path)).manifest().dump(2) << '\n';
      return 0;
    }
  } catch (const MalformedLine& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
