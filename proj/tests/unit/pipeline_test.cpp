#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "webguard/error.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/partition/partition.hpp"
#include "webguard/pipeline/config.hpp"
#include "webguard/pipeline/dataset.hpp"
#include "webguard/pipeline/model.hpp"
#include "webguard/pipeline/run.hpp"
#include "webguard/pipeline/synth.hpp"

using namespace webguard;
using namespace webguard::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("webguard_pipeline_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  return apply_overrides(RunConfig{}, {"url.hidden=16", "url.layers=2", "url.max_len=64", "html.embed_dim=16",
                                       "html.buckets=1024", "graph.hidden=16", "graph.mlp_hidden=16", "fusion.dim=16",
                                       "fusion.ffn_hidden=32", "training.epochs=2", "training.lr=1e-3"});
}

// Small synthetic corpus, ingested once per test binary.
const Dataset& small_data() {
  static const Dataset data = [] {
    auto dir = scratch("synth");
    SynthOptions opts;
    opts.n = 20;
    opts.seed = 7;
    auto manifest = make_synthetic(dir, opts);
    return ingest(manifest, small_config());
  }();
  return data;
}

}  // namespace

TEST_CASE("manifest validation names the offending row") {
  auto dir = scratch("manifest");
  write_file(dir / "a.html", "<html><body><p>a</p></body></html>");
  write_file(dir / "ok.jsonl",
             "{\"id\":\"a\",\"url\":\"http://a.com\",\"html_path\":\"a.html\",\"label\":0}\n\n"
             "{\"id\":\"b\",\"url\":\"http://b.com\",\"html_path\":\"a.html\",\"label\":1}\n");
  auto rows = read_manifest(dir / "ok.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].id == "b");
  CHECK(rows[1].label == 1);

  write_file(dir / "bad_label.jsonl", "{\"id\":\"x7\",\"url\":\"u\",\"html_path\":\"a.html\",\"label\":2}\n");
  try {
    read_manifest(dir / "bad_label.jsonl");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("x7") != std::string::npos);
  }

  write_file(dir / "dup.jsonl",
             "{\"id\":\"a\",\"url\":\"u\",\"html_path\":\"a.html\",\"label\":0}\n"
             "{\"id\":\"a\",\"url\":\"u\",\"html_path\":\"a.html\",\"label\":1}\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.jsonl"), InputError);
  write_file(dir / "missing.jsonl", "{\"id\":\"a\",\"label\":0}\n");
  CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), InputError);

  write_manifest(dir / "round.jsonl", rows);
  auto again = read_manifest(dir / "round.jsonl");
  REQUIRE(again.size() == 2);
  CHECK(again[0].url == rows[0].url);

  write_file(dir / "gone.jsonl", "{\"id\":\"g\",\"url\":\"u\",\"html_path\":\"nope.html\",\"label\":0}\n");
  CHECK_THROWS_AS(ingest(dir / "gone.jsonl", RunConfig{}), InputError);
}

TEST_CASE("config parsing, overrides and hash") {
  RunConfig base;
  base.finalize();
  RunConfig same;
  same.finalize();
  CHECK(base.hash() == same.hash());
  CHECK(base.hash().size() == 16);

  auto changed = apply_overrides(RunConfig{}, {"training.lr=0.001", "voting.t_f=7"});
  CHECK(changed.training.lr == 0.001);
  CHECK(changed.voting.t_f == 7);
  CHECK(changed.hash() != base.hash());

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"training", {{"bogus", 1}}}}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"nosuch.key=1"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"training.lr"}), ConfigError);

  auto j = parse_config_text("# comment\nseed = 9\n[training]\nepochs = 3  # trailing\n[url]\ndilations = [1, 2]\n");
  auto c = config_from_json(j);
  CHECK(c.seed == 9);
  CHECK(c.training.epochs == 3);
  CHECK(c.url.dilations == std::vector<int>{1, 2});

  auto dir = scratch("config");
  write_file(dir / "run.toml", "[voting]\niter_num = 3\n");
  auto loaded = load_config(dir / "run.toml", {"seed=5"});
  CHECK(loaded.voting.iter_num == 3);
  CHECK(loaded.seed == 5);
  CHECK(config_from_json(loaded.to_json()).hash() == loaded.hash());
}

TEST_CASE("kfold partitions every index exactly once and is stable") {
  auto folds = kfold(23, 5, 42);
  REQUIRE(folds.size() == 5);
  std::vector<std::size_t> all;
  for (const auto& f : folds) {
    CHECK(std::is_sorted(f.begin(), f.end()));
    CHECK((f.size() == 4 || f.size() == 5));
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(kfold(23, 5, 42) == folds);
  CHECK(kfold(23, 5, 43) != folds);
  CHECK_THROWS_AS(kfold(3, 5, 1), ParameterError);
  CHECK(sample_seed(1, "a") == sample_seed(1, "a"));
  CHECK(sample_seed(1, "a") != sample_seed(1, "b"));
}

TEST_CASE("synthetic corpus laws") {
  SynthOptions opts;
  opts.n = 40;
  opts.seed = 11;
  auto docs = make_synthetic_documents(opts);
  REQUIRE(docs.size() == 40);
  std::size_t malicious = 0;
  for (const auto& d : docs) {
    const bool mal = d.row.label == 1;
    malicious += mal;
    CHECK(mal == d.planted.has_value());
    const bool has_sig = d.html.find("display:none") != std::string::npos;
    CHECK(has_sig == mal);
    if (!mal) continue;
    const auto& rec = *d.planted;
    auto g = html::parse_html(d.html);
    CHECK(rec.doc_nodes == g.size());
    CHECK(static_cast<double>(rec.nodes.size()) / static_cast<double>(g.size()) <= 0.05);
    std::set<std::size_t> groups;
    for (const auto& id : rec.nodes) {
      auto it = std::find_if(g.nodes.begin(), g.nodes.end(), [&](const html::DomNode& n) { return n.node_id == id; });
      CHECK(it != g.nodes.end());
      groups.insert(partition::group_of(id, opts.t_f));
    }
    CHECK(groups.size() == 1);
    CHECK(*groups.begin() == rec.group);
  }
  CHECK(malicious == 20);

  auto again = make_synthetic_documents(opts);
  for (std::size_t i = 0; i < docs.size(); ++i) CHECK(again[i].html == docs[i].html);
}

TEST_CASE("training with lr 0 leaves the trainable parameters unchanged") {
  auto config = apply_overrides(small_config(), {"training.lr=0", "training.epochs=1"});
  WebGuardModel model(config);
  std::vector<std::vector<double>> before;
  for (const auto& t : model.params.trainable()) before.emplace_back(t.data().begin(), t.data().end());
  auto log = train(model, small_data());
  REQUIRE(log.size() == 1);
  CHECK(std::isfinite(log[0].loss));
  auto after = model.params.trainable();
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(std::equal(before[i].begin(), before[i].end(), after[i].data().begin()));
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  auto dir = scratch("determinism");
  const auto config = small_config();
  WebGuardModel a(config), b(config);
  auto la = train(a, small_data());
  auto lb = train(b, small_data());
  REQUIRE(la.size() == 2);
  CHECK(to_json(la).dump() == to_json(lb).dump());
  a.save(dir / "a.ckpt");
  b.save(dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));

  auto loaded = load_model(dir / "a.ckpt", &config);
  EvalOptions opts;
  opts.seed = 3;
  auto ea = evaluate(a, small_data(), opts);
  auto el = evaluate(*loaded, small_data(), opts);
  CHECK(metrics::to_json(ea.report).dump() == metrics::to_json(el.report).dump());
  CHECK(verdicts_csv(ea.verdicts) == verdicts_csv(el.verdicts));

  auto other = apply_overrides(config, {"seed=43"});
  CHECK_THROWS_AS(load_model(dir / "a.ckpt", &other), ConfigError);
}

TEST_CASE("evaluation modes and perturbation") {
  WebGuardModel model(small_config());
  const auto& data = small_data();
  EvalOptions opts;
  opts.seed = 5;
  auto base = evaluate(model, data, opts);
  REQUIRE(base.verdicts.size() == data.size());
  for (const auto& v : base.verdicts) {
    CHECK(v.y_score >= 0.0);
    CHECK(v.y_score <= 1.0);
  }

  opts.perturb_p = 0.0;
  auto p0 = evaluate(model, data, opts);
  CHECK(verdicts_csv(p0.verdicts) == verdicts_csv(base.verdicts));

  opts.perturb_p = 1.0;
  auto p1 = evaluate(model, data, opts);
  CHECK(p1.verdicts.size() == data.size());

  opts.perturb_p = 0.0;
  opts.workers = 3;
  auto parallel = evaluate(model, data, opts);
  CHECK(verdicts_csv(parallel.verdicts) == verdicts_csv(base.verdicts));

  opts.workers = 1;
  opts.use_voting = false;
  auto single = evaluate(model, data, opts);
  CHECK(single.verdicts.size() == data.size());

  CHECK_THROWS_AS(evaluate(model, Dataset{}, opts), InputError);
  opts.perturb_p = 1.5;
  CHECK_THROWS_AS(evaluate(model, data, opts), ParameterError);
}

TEST_CASE("training refuses empty or single-class data") {
  WebGuardModel model(small_config());
  CHECK_THROWS_AS(train(model, Dataset{}), InputError);
  Dataset benign;
  for (const auto& s : small_data().samples)
    if (s.row.label == 0) benign.samples.push_back(s);
  CHECK_THROWS_AS(train(model, benign), InputError);
}

TEST_CASE("predict reports localization for malicious verdicts") {
  WebGuardModel model(small_config());
  ManifestRow row{"p", "http://paypa1-secure.example.top/login", "", 1};
  auto sample = make_sample(row, "<html><body><form action=http://x.ru method=post><input type=password></form></body></html>",
                            model.config());
  auto p = predict(model, sample, 1, true);
  auto j = p.to_json();
  CHECK(j.contains("y_pred"));
  CHECK(p.report.has_value() == (p.outcome.y_pred == 1));
  auto q = predict(model, sample, 1, false);
  CHECK_FALSE(q.report.has_value());
  CHECK(q.outcome.y_pred == p.outcome.y_pred);
}
