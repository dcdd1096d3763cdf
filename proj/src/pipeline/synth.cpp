#include "webguard/pipeline/synth.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "webguard/error.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/partition/partition.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kWords{
    "about",   "account", "archive", "article", "blog",    "careers", "contact", "events",  "garden",
    "gallery", "guide",   "help",    "history", "kitchen", "library", "market",  "music",   "news",
    "notes",   "office",  "photos",  "press",   "recipes", "report",  "review",  "science", "services",
    "shop",    "sports",  "store",   "support", "team",    "travel",  "weather", "world",   "yoga"};
const std::vector<std::string> kBrands{"paypal", "google", "microsoft", "apple", "amazon", "netflix", "outlook"};
const std::vector<std::string> kEvilHosts{"secure-verify.xyz", "login-update.top", "account-check.info",
                                          "auth-confirm.ru", "client-portal.cc"};
const std::vector<std::string> kObfuscation{"eval", "atob", "unescape", "String.fromCharCode", "document.write",
                                            "window['ev'+'al']", "decodeURIComponent", "charCodeAt", "\\x65\\x76"};
const std::vector<std::string> kEncoded{"'\\x68\\x74\\x74\\x70'", "'aHR0cDovL2V2aWw='", "'%3Cscript%3E'",
                                        "'\\u0065\\u0076'", "'ZG9jdW1lbnQuY29va2ll'"};
const std::vector<std::string> kAnalytics{"window.dataLayer", "=", "window.dataLayer", "||", "[];", "function",
                                          "gtag(){dataLayer.push(arguments);}", "gtag('js',", "new", "Date());"};
const std::set<std::string> kVoid{"input", "meta", "link", "img", "br", "hr"};

struct El {
  std::string tag;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;
  std::vector<El> children;
  bool planted = false;
};

El el(std::string tag, std::vector<std::pair<std::string, std::string>> attrs = {}, std::string text = "") {
  return El{std::move(tag), std::move(attrs), std::move(text), {}, false};
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_.below(n)); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  const std::string& pick(const std::vector<std::string>& v) { return v[below(v.size())]; }
  bool chance(double p) { return rng_.bernoulli(p); }

  std::string sentence(std::size_t lo, std::size_t hi) {
    std::string s;
    for (std::size_t i = 0, n = between(lo, hi); i < n; ++i) s += (i ? " " : "") + pick(kWords);
    return s;
  }
  std::string hex(std::size_t digits) {
    static const char* k = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < digits; ++i) s += k[below(16)];
    return s;
  }

  El link() { return el("a", {{"href", "/" + pick(kWords) + "/" + pick(kWords)}}, sentence(1, 3)); }

  El section() {
    El s = el(chance(0.5) ? "section" : "div", {{"class", pick(kWords)}});
    s.children.push_back(el("h2", {}, sentence(1, 4)));
    for (std::size_t i = 0, n = between(1, 3); i < n; ++i) {
      El p = el("p", {}, sentence(4, 12));
      if (chance(0.4)) p.children.push_back(link());
      s.children.push_back(std::move(p));
    }
    for (std::size_t i = 0, n = between(0, 3); i < n; ++i) {
      El card = el("div", {{"class", "card"}});
      card.children.push_back(el("img", {{"src", "/img/" + pick(kWords) + ".jpg"}, {"alt", pick(kWords)}}));
      card.children.push_back(el("p", {}, sentence(3, 8)));
      card.children.push_back(link());
      s.children.push_back(std::move(card));
    }
    if (chance(0.5)) {
      El ul = el("ul");
      for (std::size_t i = 0, n = between(2, 5); i < n; ++i) {
        El li = el("li");
        li.children.push_back(link());
        ul.children.push_back(std::move(li));
      }
      s.children.push_back(std::move(ul));
    }
    return s;
  }

  El page(std::size_t min_nodes) {
    El head = el("head");
    head.children.push_back(el("title", {}, sentence(1, 4)));
    head.children.push_back(el("meta", {{"charset", "utf-8"}}));
    for (std::size_t i = 0, n = between(0, 2); i < n; ++i)
      head.children.push_back(el("link", {{"rel", "stylesheet"}, {"href", "/css/" + pick(kWords) + ".css"}}));
    if (chance(0.5)) head.children.push_back(analytics_script());

    El nav = el("nav");
    El menu = el("ul");
    for (std::size_t i = 0, n = between(3, 6); i < n; ++i) {
      El li = el("li");
      li.children.push_back(link());
      menu.children.push_back(std::move(li));
    }
    nav.children.push_back(std::move(menu));
    El header = el("header");
    header.children.push_back(el("h1", {}, sentence(1, 3)));
    header.children.push_back(std::move(nav));

    El main = el("main");
    El body = el("body");
    body.children.push_back(std::move(header));
    if (chance(0.5)) body.children.push_back(search_form());
    if (chance(0.3)) body.children.push_back(login_form());
    El footer = el("footer");
    footer.children.push_back(el("p", {}, sentence(3, 6)));
    for (std::size_t i = 0, n = between(1, 4); i < n; ++i) footer.children.push_back(link());

    El html = el("html", {{"lang", "en"}});
    html.children.push_back(std::move(head));
    body.children.push_back(std::move(main));
    body.children.push_back(std::move(footer));
    if (chance(0.3)) body.children.push_back(analytics_script());
    html.children.push_back(std::move(body));
    // Grow <main> until the page is large enough.
    while (count(html) < min_nodes) find_main(html).children.push_back(section());
    return html;
  }

  El search_form() {
    El f = el("form", {{"action", "/search"}, {"method", "get"}, {"class", "search"}});
    f.children.push_back(el("input", {{"type", "text"}, {"name", "q"}, {"placeholder", pick(kWords)}}));
    f.children.push_back(el("input", {{"type", "submit"}, {"value", "Search"}}));
    return f;
  }

  El login_form() {
    El f = el("form", {{"action", "/login"}, {"method", "post"}, {"class", "login"}});
    f.children.push_back(el("input", {{"type", "text"}, {"name", "user"}}));
    f.children.push_back(el("input", {{"type", "password"}, {"name", chance(0.5) ? "pass" : "pwd"}}));
    f.children.push_back(el("input", {{"type", "submit"}, {"value", "Sign in"}}));
    return f;
  }

  El analytics_script() {
    std::string text;
    for (const auto& t : kAnalytics) text += (text.empty() ? "" : " ") + t;
    return el("script", {}, text + " gtag('config', 'UA-" + std::to_string(between(10000, 99999)) + "');");
  }

  El hidden_form() {
    El f = el("form", {{"action", "http://" + pick(kEvilHosts) + "/" + pick(kWords) + ".php"},
                       {"method", "post"},
                       {"style", "display:none"}});
    f.planted = true;
    El in = el("input", {{"type", "password"}, {"name", chance(0.5) ? "pass" : "pwd"}});
    in.planted = true;
    f.children.push_back(std::move(in));
    return f;
  }

  El obfuscated_script() {
    std::string text = "var _0x4f2a = [";
    for (std::size_t i = 0, n = between(3, 6); i < n; ++i) text += (i ? " , " : " ") + pick(kEncoded);
    text += " ] ;";
    for (std::size_t i = 0, n = between(4, 7); i < n; ++i) text += " " + pick(kObfuscation) + " ( _0x4f2a [ " +
                                                                     std::to_string(below(4)) + " ] ) ;";
    El s = el("script", {}, text);
    s.planted = true;
    return s;
  }

  std::string benign_url() {
    std::string host = pick(kWords) + (chance(0.5) ? pick(kWords) : "");
    if (chance(0.15)) host += "-" + std::to_string(between(1, 2024));
    static const std::vector<std::string> tlds{".com", ".org", ".net", ".io"};
    std::string u = (chance(0.8) ? "https://www." : "http://") + host + pick(tlds);
    for (std::size_t i = 0, n = between(0, 3); i < n; ++i) u += "/" + pick(kWords);
    return u;
  }

  std::string malicious_url() {
    if (chance(0.5)) return benign_url();
    std::string brand = pick(kBrands);
    static const std::vector<std::pair<char, char>> swaps{{'o', '0'}, {'l', '1'}, {'i', '1'}, {'e', '3'}, {'a', '4'}};
    for (std::size_t k = 0, n = between(1, 2); k < n; ++k) {
      const auto [from, to] = swaps[below(swaps.size())];
      if (auto pos = brand.find(from); pos != std::string::npos) brand[pos] = to;
    }
    static const std::vector<std::string> tails{"secure", "login", "verify", "account"};
    static const std::vector<std::string> tlds{".xyz", ".top", ".info", ".com"};
    return (chance(0.5) ? "http://" : "https://") + brand + "-" + pick(tails) + pick(tlds) + "/" + pick(tails) +
           ".php";
  }

  static std::size_t count(const El& e) {
    std::size_t n = 1;
    for (const auto& c : e.children) n += count(c);
    return n;
  }

  static El& find_main(El& e) {
    for (auto& c : e.children)
      if (c.tag == "body")
        for (auto& m : c.children)
          if (m.tag == "main") return m;
    throw ContractError("synth: page without <main>");
  }

 private:
  util::Rng rng_;
};

void collect_containers(El& e, std::vector<El*>& out) {
  if (e.tag == "body" || e.tag == "main" || e.tag == "section" || e.tag == "footer" || e.tag == "header" ||
      (e.tag == "div")) out.push_back(&e);
  for (auto& c : e.children) collect_containers(c, out);
}

void planted_paths(const El& e, const std::string& path, std::vector<std::string>& out) {
  if (e.planted) out.push_back(path);
  for (std::size_t i = 0; i < e.children.size(); ++i)
    planted_paths(e.children[i], path + "/" + std::to_string(i), out);
}

std::string escape(const std::string& s, bool attribute) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (attribute && c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

void serialize(const El& e, std::string& out) {
  out += "<" + e.tag;
  for (const auto& [k, v] : e.attrs) out += " " + k + "=\"" + escape(v, true) + "\"";
  out += ">";
  if (kVoid.count(e.tag)) return;
  out += e.tag == "script" ? e.text : escape(e.text, false);
  for (const auto& c : e.children) serialize(c, out);
  out += "</" + e.tag + ">";
}

// Inserts the signature at random containers until every planted node hashes
// to the same group. Returns false if no placement was found.
bool plant(Gen& gen, El& page, std::size_t t_f) {
  for (int attempt = 0; attempt < 4000; ++attempt) {
    El trial = page;
    std::vector<El*> containers;
    collect_containers(trial, containers);
    El* a = containers[gen.below(containers.size())];
    a->children.insert(a->children.begin() + static_cast<long>(gen.below(a->children.size() + 1)), gen.hidden_form());
    containers.clear();
    collect_containers(trial, containers);
    El* b = containers[gen.below(containers.size())];
    b->children.insert(b->children.begin() + static_cast<long>(gen.below(b->children.size() + 1)),
                       gen.obfuscated_script());
    std::vector<std::string> paths;
    planted_paths(trial, "0", paths);
    std::set<std::size_t> groups;
    for (const auto& p : paths) groups.insert(partition::group_of(p, t_f));
    if (groups.size() == 1) {
      page = std::move(trial);
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<SynthDocument> make_synthetic_documents(const SynthOptions& o) {
  if (o.n == 0) throw ParameterError("synth: n must be positive");
  if (!(o.malicious_fraction >= 0.0 && o.malicious_fraction <= 1.0))
    throw ParameterError("synth: malicious_fraction must lie in [0, 1]");
  if (o.t_f == 0) throw ParameterError("synth: t_f must be positive");
  const auto n_mal = static_cast<std::size_t>(std::llround(o.malicious_fraction * static_cast<double>(o.n)));
  std::vector<int> labels(o.n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<long>(n_mal), 1);
  util::Rng order(util::Rng::derive(o.seed, 0));
  order.shuffle(labels);

  const int width = o.n > 1 ? static_cast<int>(std::to_string(o.n - 1).size()) : 1;
  std::vector<SynthDocument> docs;
  for (std::size_t i = 0; i < o.n; ++i) {
    std::string num = std::to_string(i);
    num.insert(0, static_cast<std::size_t>(std::max(width, 4)) - std::min<std::size_t>(num.size(), std::max(width, 4)), '0');
    SynthDocument d;
    d.row.id = o.id_prefix + num;
    d.row.label = labels[i];
    d.row.html_path = "html/" + d.row.id + ".html";
    Gen gen(util::Rng::derive(o.seed, i + 1));
    // Three signature nodes must stay within 5% of the document.
    const std::size_t min_nodes = gen.between(70, 140);
    El page = gen.page(min_nodes);
    if (d.row.label == 1) {
      for (int tries = 0; !plant(gen, page, o.t_f); ++tries) {
        if (tries == 50) throw ContractError("synth: cannot place the signature in one group for " + d.row.id);
        page = gen.page(min_nodes);
      }
      std::vector<std::string> paths;
      planted_paths(page, "0", paths);
      d.planted = PlantedRecord{d.row.id, partition::group_of(paths.front(), o.t_f), paths, Gen::count(page)};
      d.row.url = gen.malicious_url();
    } else {
      d.row.url = gen.benign_url();
    }
    serialize(page, d.html);

    // The parser must see the tree we built.
    auto g = html::parse_html(d.html);
    if (g.size() != Gen::count(page))
      throw ContractError("synth: " + d.row.id + " parses to " + std::to_string(g.size()) + " nodes, built " +
                          std::to_string(Gen::count(page)));
    if (d.planted) {
      for (const auto& p : d.planted->nodes) {
        auto it = std::find_if(g.nodes.begin(), g.nodes.end(), [&](const auto& nd) { return nd.node_id == p; });
        if (it == g.nodes.end() || (it->tag != "form" && it->tag != "input" && it->tag != "script"))
          throw ContractError("synth: planted node " + p + " of " + d.row.id + " did not survive parsing");
      }
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

fs::path make_synthetic(const fs::path& out_dir, const SynthOptions& options) {
  auto docs = make_synthetic_documents(options);
  fs::create_directories(out_dir / "html");
  std::vector<ManifestRow> rows;
  std::ofstream planted(out_dir / "planted.jsonl", std::ios::binary);
  for (const auto& d : docs) {
    std::ofstream f(out_dir / d.row.html_path, std::ios::binary);
    f << d.html;
    if (!f) throw InputError("synth: cannot write " + (out_dir / d.row.html_path).string());
    rows.push_back(d.row);
    if (d.planted)
      planted << json{{"id", d.planted->id},
                      {"group", d.planted->group},
                      {"nodes", d.planted->nodes},
                      {"doc_nodes", d.planted->doc_nodes}}
                     .dump()
              << '\n';
  }
  const auto manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, rows);
  return manifest;
}

std::vector<PlantedRecord> read_planted(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<PlantedRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    out.push_back({j.at("id").get<std::string>(), j.at("group").get<std::size_t>(),
                   j.at("nodes").get<std::vector<std::string>>(), j.at("doc_nodes").get<std::size_t>()});
  }
  return out;
}

}  // namespace webguard::pipeline
