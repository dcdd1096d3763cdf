#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "webguard/error.hpp"
#include "webguard/metrics/metrics.hpp"
#include "webguard/partition/partition.hpp"
#include "webguard/pipeline/config.hpp"
#include "webguard/pipeline/dataset.hpp"
#include "webguard/pipeline/model.hpp"
#include "webguard/pipeline/run.hpp"
#include "webguard/pipeline/synth.hpp"

namespace fs = std::filesystem;
using namespace webguard;
using nlohmann::json;

namespace {

constexpr int kExitBenign = 0;
constexpr int kExitError = 1;
constexpr int kExitMalicious = 3;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "TOML-style run configuration")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override a config value, section.key=value (repeatable)");
  }
  bool given() const { return !path.empty() || !overrides.empty(); }
  pipeline::RunConfig load() const {
    if (!path.empty()) return pipeline::load_config(path, overrides);
    pipeline::RunConfig c;
    c.finalize();
    return pipeline::apply_overrides(c, overrides);
  }
};

struct DataArgs {
  std::string manifest;
  std::string cache;
  std::size_t workers = 1;
  std::optional<std::size_t> fold;

  void attach(CLI::App* app, bool with_fold) {
    app->add_option("--manifest", manifest, "Sample manifest (JSONL)")->required()->check(CLI::ExistingFile);
    app->add_option("--cache", cache, "DomGraph cache directory");
    app->add_option("--workers", workers, "Parallel workers for ingestion and evaluation")->check(CLI::PositiveNumber);
    if (with_fold) app->add_option("--fold", fold, "Use one k-fold split: this fold held out");
  }
  pipeline::Dataset load(const pipeline::RunConfig& config) const {
    return pipeline::ingest(manifest, config, {cache, workers});
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw InputError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::unique_ptr<pipeline::WebGuardModel> open_model(const std::string& checkpoint, const ConfigArgs& cfg) {
  if (!cfg.given()) return pipeline::load_model(checkpoint);
  auto expected = cfg.load();
  return pipeline::load_model(checkpoint, &expected);
}

void write_evaluation(const fs::path& dir, const pipeline::Evaluation& ev, const json& extra) {
  json j = metrics::to_json(ev.report);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  write_text(dir / "metrics.csv", metrics::to_csv(ev.report));
  write_text(dir / "roc_points.csv", metrics::roc_csv(metrics::roc_points(ev.labels(), ev.scores())));
  write_text(dir / "pr_points.csv", metrics::pr_csv(metrics::pr_points(ev.labels(), ev.scores())));
  write_text(dir / "verdicts.csv", pipeline::verdicts_csv(ev.verdicts));
}

pipeline::Dataset select_split(pipeline::Dataset data, const pipeline::RunConfig& c, std::optional<std::size_t> fold,
                               bool train_side) {
  if (!fold) return data;
  auto [train, test] = pipeline::split_fold(data, c.training, *fold);
  return train_side ? std::move(train) : std::move(test);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malicious web page detector: URL + DOM subgraph model with biased voting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "webguard 1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a planted-signal synthetic corpus");
  std::string synth_out;
  pipeline::SynthOptions synth_opts;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("-n,--count", synth_opts.n, "Number of documents")->check(CLI::PositiveNumber);
  synth->add_option("--fraction", synth_opts.malicious_fraction, "Malicious fraction")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_opts.seed, "Generator seed");
  synth->add_option("--t-f", synth_opts.t_f, "Group count the planted nodes are aligned to");
  synth->add_option("--prefix", synth_opts.id_prefix, "Sample id prefix");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and featurize a manifest, report statistics");
  ConfigArgs ingest_cfg;
  DataArgs ingest_data;
  std::string ingest_stats;
  ingest_cfg.attach(ingest);
  ingest_data.attach(ingest, false);
  ingest->add_option("--stats", ingest_stats, "Write per-sample statistics JSON here");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  ConfigArgs train_cfg;
  DataArgs train_data;
  std::string train_out, train_log;
  train_cfg.attach(train);
  train_data.attach(train, true);
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--log", train_log, "Training log JSON (default: <out>.log.json)");

  // eval / perturb-eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  auto* perturb = app.add_subcommand("perturb-eval", "Evaluate after random edge deletion");
  ConfigArgs eval_cfg;
  DataArgs eval_data;
  std::string eval_ckpt, eval_out;
  std::optional<std::uint64_t> eval_seed;
  bool no_voting = false;
  double perturb_p = 0.5;
  for (auto* cmd : {eval, perturb}) {
    eval_cfg.attach(cmd);
    eval_data.attach(cmd, true);
    cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", eval_out, "Directory for metrics and point CSVs")->required();
    cmd->add_option("--seed", eval_seed, "Voting seed (default: the config seed)");
    cmd->add_flag("--no-voting", no_voting, "Single round instead of the biased vote");
  }
  perturb->add_option("-p,--prob", perturb_p, "Edge deletion probability")->check(CLI::Range(0.0, 1.0));

  // predict
  auto* predict = app.add_subcommand("predict", "Classify one page; exit 0 benign, 3 malicious, 1 error");
  ConfigArgs predict_cfg;
  std::string predict_ckpt, predict_url, predict_html;
  std::optional<std::uint64_t> predict_seed;
  bool predict_localize = false;
  predict_cfg.attach(predict);
  predict->add_option("--checkpoint", predict_ckpt, "Model checkpoint")->required();
  predict->add_option("--url", predict_url, "Page URL")->required();
  predict->add_option("--html", predict_html, "Page HTML file")->required();
  predict->add_option("--seed", predict_seed, "Voting seed (default: the config seed)");
  predict->add_flag("--localize", predict_localize, "Report the suspicious node groups");

  // partition-dump
  auto* dump = app.add_subcommand("partition-dump", "Print the node groups of documents as JSON");
  std::vector<std::string> dump_html;
  std::string dump_manifest, dump_out;
  std::size_t dump_tf = 5;
  dump->add_option("--html", dump_html, "HTML file(s)");
  dump->add_option("--manifest", dump_manifest, "Dump every document of a manifest");
  dump->add_option("--t-f", dump_tf, "Number of groups")->check(CLI::PositiveNumber);
  dump->add_option("--out", dump_out, "Write here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto manifest = pipeline::make_synthetic(synth_out, synth_opts);
      std::cout << manifest.string() << "\n";
    } else if (*ingest) {
      auto config = ingest_cfg.load();
      auto data = ingest_data.load(config);
      auto stats = data.stats();
      if (!ingest_stats.empty()) write_text(ingest_stats, stats.dump(2) + "\n");
      std::cout << "samples " << stats["samples"] << ", nodes " << stats["nodes"] << ", edges " << stats["edges"]
                << ", cache hits " << stats["cache_hits"] << "\n";
    } else if (*train) {
      auto config = train_cfg.load();
      auto data = select_split(train_data.load(config), config, train_data.fold, true);
      pipeline::WebGuardModel model(config);
      const auto start = std::chrono::steady_clock::now();
      auto log = pipeline::train(model, data, [&](const pipeline::EpochLog& e) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::fprintf(stderr, "epoch %zu  loss %.6f  acc %.4f  (%.1fs)\n", e.epoch, e.loss, e.accuracy, secs);
      });
      model.save(train_out);
      json log_json{{"config_hash", config.hash()}, {"samples", data.size()}, {"epochs", pipeline::to_json(log)}};
      write_text(train_log.empty() ? train_out + ".log.json" : train_log, log_json.dump(2) + "\n");
      std::cout << train_out << "\n";
    } else if (*eval || *perturb) {
      auto model = open_model(eval_ckpt, eval_cfg);
      const auto& config = model->config();
      auto data = select_split(eval_data.load(config), config, eval_data.fold, false);
      pipeline::EvalOptions opts;
      opts.use_voting = !no_voting;
      opts.seed = eval_seed.value_or(config.seed);
      opts.workers = eval_data.workers;
      opts.perturb_p = *perturb ? perturb_p : 0.0;
      auto ev = pipeline::evaluate(*model, data, opts);
      json extra{{"samples", data.size()}, {"voting", opts.use_voting}, {"config_hash", config.hash()}};
      if (*perturb) extra["edge_deletion_p"] = opts.perturb_p;
      write_evaluation(eval_out, ev, extra);
      std::cout << metrics::to_json(ev.report).dump(2) << "\n";
    } else if (*predict) {
      auto model = open_model(predict_ckpt, predict_cfg);
      if (predict_url.empty()) throw InputError("predict: empty URL");
      const auto html = read_text(predict_html);
      pipeline::ManifestRow row{fs::path(predict_html).stem().string(), predict_url, predict_html, 0};
      auto sample = pipeline::make_sample(row, html, model->config());
      auto p = pipeline::predict(*model, sample, predict_seed.value_or(model->config().seed), predict_localize);
      std::cout << p.to_json().dump(2) << "\n";
      return p.outcome.y_pred == 1 ? kExitMalicious : kExitBenign;
    } else if (*dump) {
      if (dump_html.empty() && dump_manifest.empty()) throw InputError("partition-dump: give --html or --manifest");
      std::vector<std::pair<std::string, fs::path>> docs;
      for (const auto& h : dump_html) docs.emplace_back(fs::path(h).filename().string(), h);
      if (!dump_manifest.empty())
        for (const auto& r : pipeline::read_manifest(dump_manifest))
          docs.emplace_back(r.id, fs::path(dump_manifest).parent_path() / r.html_path);
      json out = json::array();
      for (const auto& [id, path] : docs) {
        auto g = html::parse_html(read_text(path));
        out.push_back({{"id", id}, {"t_f", dump_tf}, {"groups", partition::to_json(partition::partition(g, dump_tf, id), g)}});
      }
      const std::string text = out.dump(1) + "\n";
      if (dump_out.empty()) std::cout << text;
      else write_text(dump_out, text);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
