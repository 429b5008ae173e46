#include "citecheck/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "citecheck/concurrency.hpp"
#include "citecheck/csv.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::eval {

std::string to_string(Difficulty d) { return d == Difficulty::Surface ? "SURFACE" : "DEEP"; }

std::optional<Difficulty> parse_difficulty(std::string_view s) {
  const std::string t = text::to_lower(text::trim(s));
  if (t == "surface") return Difficulty::Surface;
  if (t == "deep") return Difficulty::Deep;
  return std::nullopt;
}

std::vector<BenchmarkInstance> parse_benchmark(const std::string& csv_text) {
  const csv::Table t = csv::parse(csv_text);
  static const char* kRequired[] = {"Miscitation", "Explanation", "Correct Statement",
                                    "Original Text", "Miscite Type", "Difficulties"};
  std::map<std::string, int> col;
  for (const char* name : kRequired) {
    const int c = t.column(name);
    if (c < 0) throw SchemaError(std::string("benchmark: missing column '") + name + "'");
    col[name] = c;
  }
  for (const char* name : {"Id", "Source Paper", "Citing Context", "Numeric Answer"}) col[name] = t.column(name);

  std::vector<BenchmarkInstance> out;
  std::vector<std::string> errors;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "line " + std::to_string(t.row_lines[r]);
    if (row.size() != t.header.size()) {
      errors.push_back(where + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(row.size()));
      continue;
    }
    auto get = [&](const char* name) { return col[name] < 0 ? std::string() : text::trim(row[col[name]]); };
    BenchmarkInstance b;
    b.line = t.row_lines[r];
    b.id = get("Id").empty() ? "row" + std::to_string(r + 1) : get("Id");
    b.miscitation_text = get("Miscitation");
    b.explanation = get("Explanation");
    b.correct_statement = get("Correct Statement");
    b.original_text = get("Original Text");
    b.source_paper = get("Source Paper");
    b.citing_context = get("Citing Context").empty() ? b.miscitation_text : get("Citing Context");
    const auto code = parse_taxonomy_code(get("Miscite Type"));
    if (!code) {
      errors.push_back(where + ": unknown Miscite Type '" + get("Miscite Type") + "'");
      continue;
    }
    b.miscite_type = *code;
    const auto diff = parse_difficulty(get("Difficulties"));
    if (!diff) {
      errors.push_back(where + ": Difficulties must be SURFACE or DEEP, got '" + get("Difficulties") + "'");
      continue;
    }
    b.difficulty = *diff;
    if (b.miscitation_text.empty()) {
      errors.push_back(where + ": empty Miscitation");
      continue;
    }
    if (!get("Numeric Answer").empty()) {
      try {
        b.numeric_answer = std::stod(get("Numeric Answer"));
      } catch (const std::exception&) {
        errors.push_back(where + ": bad Numeric Answer '" + get("Numeric Answer") + "'");
        continue;
      }
    }
    out.push_back(std::move(b));
  }
  if (!errors.empty()) throw SchemaError("benchmark: " + text::join(errors, "; "));
  return out;
}

std::vector<BenchmarkInstance> load_benchmark(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("benchmark: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_benchmark(ss.str());
}

std::string predicted_label(const Prediction& p) {
  if (p.verdict == VerdictLabel::Miscitation && p.code) return benchmark_label(*p.code);
  return to_string(p.verdict);
}

std::string to_string(Grade g) { return g == Grade::Correct ? "CORRECT" : "INCORRECT"; }

Json to_json(const GradedSample& g) {
  return Json{{"predicted_label", g.predicted_label},
              {"predicted_explanation", g.predicted_explanation},
              {"grade", to_string(g.grade)},
              {"grader_called", g.grader_called},
              {"warnings", g.warnings}};
}

bool numeric_match(double reply, double answer, double tol) {
  return std::abs(reply - answer) / std::max(1.0, std::abs(answer)) < tol;
}

std::optional<Grade> parse_grade(const std::string& reply) {
  std::string t = text::trim(text::strip_code_fence(reply));
  while (!t.empty() && (t.back() == '.' || t.back() == '*')) t.pop_back();
  while (!t.empty() && t.front() == '*') t.erase(t.begin());
  for (auto& c : t) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (t == "CORRECT") return Grade::Correct;
  if (t == "INCORRECT") return Grade::Incorrect;
  return std::nullopt;
}

GradedSample grade_sample(const BenchmarkInstance& gold, const Prediction& prediction, ModelClient& grader,
                          std::int64_t seed, const std::string& call_tag) {
  GradedSample g;
  g.predicted_label = predicted_label(prediction);
  g.predicted_explanation = prediction.explanation;
  const std::string gold_label = benchmark_label(gold.miscite_type);
  if (g.predicted_label != gold_label) return g;
  if (gold.numeric_answer && prediction.numeric_answer &&
      !numeric_match(*prediction.numeric_answer, *gold.numeric_answer)) {
    g.warnings.push_back("numeric answer outside the 1% tolerance");
    return g;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    CompletionRequest req;
    req.system_text = std::string(prompts::grader_system);
    req.user_text = text::fill_template(prompts::grader_user, {{"CITING_TEXT", gold.citing_context},
                                                               {"GOLD_LABEL", gold_label},
                                                               {"GOLD_EXPLANATION", gold.explanation},
                                                               {"PRED_LABEL", g.predicted_label},
                                                               {"PRED_EXPLANATION", prediction.explanation}});
    req.decoding = DecodingConfig::deterministic(seed + attempt);
    req.call_tag = call_tag;
    g.grader_called = true;
    const auto grade = parse_grade(grader.complete(req).at(0).text);
    if (grade) {
      g.grade = *grade;
      return g;
    }
    g.warnings.push_back("grader reply not CORRECT/INCORRECT (attempt " + std::to_string(attempt + 1) + ")");
  }
  g.grade = Grade::Incorrect;
  return g;
}

double acc_pass_at_3(const std::vector<std::vector<Grade>>& grades) {
  if (grades.empty()) throw UndefinedResultError("acc_pass_at_3: no instances");
  std::size_t pass = 0;
  for (std::size_t i = 0; i < grades.size(); ++i) {
    if (grades[i].size() != 3)
      throw ContractError("acc_pass_at_3: instance " + std::to_string(i) + " has " + std::to_string(grades[i].size()) +
                          " samples, expected 3");
    if (std::find(grades[i].begin(), grades[i].end(), Grade::Correct) != grades[i].end()) ++pass;
  }
  return static_cast<double>(pass) / static_cast<double>(grades.size());
}

EconomyReport token_economy_report(const std::vector<LedgerEntry>& full_text, const std::vector<LedgerEntry>& agent) {
  auto decided = [](VerdictLabel v) { return v != VerdictLabel::Undecidable; };
  std::map<std::string, const LedgerEntry*> full;
  for (const auto& e : full_text) {
    if (!full.emplace(e.instance, &e).second) throw ContractError("token_economy: duplicate instance " + e.instance);
  }
  std::set<std::string> seen;
  std::int64_t sum_full = 0;
  std::int64_t sum_agent = 0;
  std::size_t n = 0;
  for (const auto& a : agent) {
    if (!seen.insert(a.instance).second) throw ContractError("token_economy: duplicate instance " + a.instance);
    const auto it = full.find(a.instance);
    if (it == full.end() || !decided(a.verdict) || !decided(it->second->verdict)) continue;
    sum_full += it->second->tokens;
    sum_agent += a.tokens;
    ++n;
  }
  if (n == 0) throw UndefinedResultError("token_economy: no instance where both methods returned a verdict");
  EconomyReport r;
  r.instances = n;
  r.mean_full_text = static_cast<double>(sum_full) / static_cast<double>(n);
  r.mean_agent = static_cast<double>(sum_agent) / static_cast<double>(n);
  if (r.mean_full_text == 0.0) throw UndefinedResultError("token_economy: full-text mean is zero");
  r.value = 1.0 - r.mean_agent / r.mean_full_text;
  return r;
}

double token_economy(const std::vector<LedgerEntry>& full_text, const std::vector<LedgerEntry>& agent) {
  return token_economy_report(full_text, agent).value;
}

Prediction prediction_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("prediction must be an object");
  Prediction p;
  const auto v = parse_verdict_label(j.value("verdict", ""));
  if (!v) throw SchemaError("prediction.verdict: expected Supported, Miscitation, or Undecidable");
  p.verdict = *v;
  if (j.contains("code") && !j.at("code").is_null()) {
    p.code = parse_taxonomy_code(j.at("code").get<std::string>());
    if (!p.code) throw SchemaError("prediction.code: unknown taxonomy code " + j.at("code").dump());
  }
  p.explanation = j.value("explanation", "");
  if (j.contains("numeric_answer") && !j.at("numeric_answer").is_null()) {
    if (!j.at("numeric_answer").is_number()) throw SchemaError("prediction.numeric_answer: must be a number");
    p.numeric_answer = j.at("numeric_answer").get<double>();
  }
  return p;
}

std::vector<std::pair<std::string, std::vector<Prediction>>> predictions_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("predictions must be an object keyed by instance id");
  std::vector<std::pair<std::string, std::vector<Prediction>>> out;
  for (const auto& [id, samples] : j.items()) {
    if (!samples.is_array()) throw SchemaError("predictions." + id + ": expected an array of samples");
    std::vector<Prediction> ps;
    for (const auto& s : samples) ps.push_back(prediction_from_json(s));
    out.emplace_back(id, std::move(ps));
  }
  return out;
}

std::vector<LedgerEntry> ledger_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("ledger must be an array");
  std::vector<LedgerEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Json& e = j.at(i);
    const std::string where = "ledger[" + std::to_string(i) + "]";
    if (!e.is_object() || !e.contains("instance") || !e.contains("tokens") || !e.at("tokens").is_number_integer())
      throw SchemaError(where + ": needs instance and integer tokens");
    LedgerEntry l;
    l.instance = e.at("instance").get<std::string>();
    l.tokens = e.at("tokens").get<std::int64_t>();
    if (l.tokens < 0) throw SchemaError(where + ".tokens: must be non-negative");
    const auto v = parse_verdict_label(e.value("verdict", ""));
    if (!v) throw SchemaError(where + ".verdict: expected Supported, Miscitation, or Undecidable");
    l.verdict = *v;
    out.push_back(std::move(l));
  }
  return out;
}

EvalReport evaluate(const std::vector<BenchmarkInstance>& gold,
                    const std::vector<std::pair<std::string, std::vector<Prediction>>>& predictions,
                    ModelClient& grader, std::int64_t seed) {
  std::map<std::string, const std::vector<Prediction>*> by_id;
  for (const auto& [id, ps] : predictions) {
    if (!by_id.emplace(id, &ps).second) throw SchemaError("predictions: duplicate instance " + id);
  }
  for (const auto& g : gold) {
    const auto it = by_id.find(g.id);
    if (it == by_id.end()) throw SchemaError("predictions: missing instance " + g.id);
    if (it->second->size() != 3)
      throw SchemaError("predictions." + g.id + ": expected 3 samples, got " + std::to_string(it->second->size()));
  }
  if (by_id.size() != gold.size()) throw SchemaError("predictions: instances not present in the benchmark");

  EvalReport r;
  r.instances = parallel_map(gold.size(), grader.max_parallel(), [&](std::size_t i) {
    InstanceResult ir;
    ir.id = gold[i].id;
    ir.difficulty = gold[i].difficulty;
    const auto& ps = *by_id.at(gold[i].id);
    for (std::size_t k = 0; k < ps.size(); ++k)
      ir.samples.push_back(grade_sample(gold[i], ps[k], grader, seed + static_cast<std::int64_t>(10 * k)));
    ir.passed = std::any_of(ir.samples.begin(), ir.samples.end(), [](const auto& s) { return s.grade == Grade::Correct; });
    return ir;
  });

  std::vector<std::vector<Grade>> all;
  std::vector<std::vector<Grade>> surface;
  std::vector<std::vector<Grade>> deep;
  for (const auto& ir : r.instances) {
    std::vector<Grade> gs;
    for (const auto& s : ir.samples) {
      gs.push_back(s.grade);
      if (s.grader_called) ++r.grader_calls;
    }
    (ir.difficulty == Difficulty::Surface ? surface : deep).push_back(gs);
    all.push_back(std::move(gs));
  }
  r.acc_pass_at_3 = acc_pass_at_3(all);
  if (!surface.empty()) r.acc_surface = acc_pass_at_3(surface);
  if (!deep.empty()) r.acc_deep = acc_pass_at_3(deep);
  return r;
}

Json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json instances = Json::array();
  for (const auto& ir : r.instances) {
    Json samples = Json::array();
    for (const auto& s : ir.samples) samples.push_back(to_json(s));
    instances.push_back(Json{{"id", ir.id}, {"difficulty", to_string(ir.difficulty)}, {"passed", ir.passed}, {"samples", samples}});
  }
  Json economy = nullptr;
  if (r.economy)
    economy = Json{{"token_economy", r.economy->value},
                   {"instances", r.economy->instances},
                   {"mean_full_text_tokens", r.economy->mean_full_text},
                   {"mean_agent_tokens", r.economy->mean_agent}};
  return Json{{"acc_pass_at_3", r.acc_pass_at_3},
              {"acc_pass_at_3_surface", opt(r.acc_surface)},
              {"acc_pass_at_3_deep", opt(r.acc_deep)},
              {"instances_total", r.instances.size()},
              {"grader_calls", r.grader_calls},
              {"token_economy", economy},
              {"instances", instances}};
}

std::string metrics_csv(const EvalReport& r) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "metric,value\n";
  o << "acc_pass_at_3," << r.acc_pass_at_3 << "\n";
  o << "acc_pass_at_3_surface,";
  if (r.acc_surface) o << *r.acc_surface;
  o << "\nacc_pass_at_3_deep,";
  if (r.acc_deep) o << *r.acc_deep;
  o << "\ninstances," << r.instances.size() << "\n";
  o << "grader_calls," << r.grader_calls << "\n";
  if (r.economy) {
    o << "token_economy," << r.economy->value << "\n";
    o << "token_economy_instances," << r.economy->instances << "\n";
  }
  return o.str();
}

// ---- committee ablation ---------------------------------------------------------

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
std::size_t below(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Partial Fisher-Yates: the first k of a shuffled copy.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> items, std::size_t k,
                                                    std::mt19937_64& rng) {
  k = std::min(k, items.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(items[i], items[i + below(rng, items.size() - i)]);
  items.resize(k);
  return items;
}

struct Subcommittee {
  std::vector<double> gamma;
  std::vector<int> votes;
  std::vector<double> stability;
  std::vector<int> aspects;
};

Subcommittee subcommittee(const SyntheticSource& s, const std::vector<std::size_t>& witnesses) {
  std::map<int, double> support;
  for (std::size_t w : witnesses) {
    // Each witness counts once per aspect.
    std::set<int> aspects(s.witnesses.at(w).aspects.begin(), s.witnesses.at(w).aspects.end());
    for (int a : aspects) support[a] += s.witnesses[w].influence;
  }
  double total = 0.0;
  for (const auto& [a, v] : support) total += v;
  Subcommittee c;
  for (const auto& [a, v] : support) {
    c.aspects.push_back(a);
    c.gamma.push_back(total > 0.0 ? v / total : 1.0 / static_cast<double>(support.size()));
    c.votes.push_back(s.aspect_votes.at(static_cast<std::size_t>(a)));
    c.stability.push_back(s.aspect_stability.at(static_cast<std::size_t>(a)));
  }
  return c;
}

}  // namespace

std::vector<SyntheticSource> synthetic_pool(const PoolOptions& o) {
  if (o.sources < 1 || o.aspects < 2 || o.min_witnesses < 1 || o.max_witnesses < o.min_witnesses ||
      o.min_extra_aspects < 0 || o.max_extra_aspects < o.min_extra_aspects || o.max_extra_aspects > o.aspects - 1)
    throw ContractError("synthetic_pool: inconsistent options");
  std::mt19937_64 rng(o.seed);
  std::vector<SyntheticSource> pool;
  for (int i = 0; i < o.sources; ++i) {
    SyntheticSource s;
    s.id = "synthetic-" + std::to_string(i + 1);
    s.truth = i % 2 == 0 ? VerdictLabel::Supported : VerdictLabel::Miscitation;
    const int sign = s.truth == VerdictLabel::Supported ? 1 : -1;
    for (int a = 0; a < o.aspects; ++a) {
      const bool noisy = a > 0 && unit(rng) < o.noise;
      s.aspect_votes.push_back(noisy ? 0 : sign);
      s.aspect_stability.push_back(unit(rng) < 0.8 ? 1.0 : 2.0 / 3.0);
    }
    const int n = o.min_witnesses + static_cast<int>(below(rng, static_cast<std::size_t>(o.max_witnesses - o.min_witnesses + 1)));
    std::vector<std::size_t> others;
    for (int a = 1; a < o.aspects; ++a) others.push_back(static_cast<std::size_t>(a));
    for (int w = 0; w < n; ++w) {
      SyntheticWitness wit;
      wit.influence = 0.2 + 0.8 * unit(rng);
      wit.aspects.push_back(0);
      const auto extra = static_cast<std::size_t>(o.min_extra_aspects) +
                         below(rng, static_cast<std::size_t>(o.max_extra_aspects - o.min_extra_aspects + 1));
      for (std::size_t a : sample_without_replacement(others, extra, rng)) wit.aspects.push_back(static_cast<int>(a));
      std::sort(wit.aspects.begin(), wit.aspects.end());
      s.witnesses.push_back(std::move(wit));
    }
    pool.push_back(std::move(s));
  }
  return pool;
}

Json to_json(const SyntheticSource& s) {
  Json ws = Json::array();
  for (const auto& w : s.witnesses) ws.push_back(Json{{"influence", w.influence}, {"aspects", w.aspects}});
  return Json{{"id", s.id},
              {"truth", to_string(s.truth)},
              {"aspect_votes", s.aspect_votes},
              {"aspect_stability", s.aspect_stability},
              {"witnesses", ws}};
}

SyntheticSource synthetic_source_from_json(const Json& j) {
  try {
    SyntheticSource s;
    s.id = j.at("id").get<std::string>();
    const auto truth = parse_verdict_label(j.at("truth").get<std::string>());
    if (!truth || *truth == VerdictLabel::Undecidable) throw SchemaError("pool source " + s.id + ": bad truth");
    s.truth = *truth;
    s.aspect_votes = j.at("aspect_votes").get<std::vector<int>>();
    s.aspect_stability = j.at("aspect_stability").get<std::vector<double>>();
    if (s.aspect_votes.size() != s.aspect_stability.size())
      throw SchemaError("pool source " + s.id + ": aspect arrays differ in length");
    for (const auto& w : j.at("witnesses")) {
      SyntheticWitness wit;
      wit.influence = w.at("influence").get<double>();
      wit.aspects = w.at("aspects").get<std::vector<int>>();
      for (int a : wit.aspects) {
        if (a < 0 || static_cast<std::size_t>(a) >= s.aspect_votes.size())
          throw SchemaError("pool source " + s.id + ": aspect index out of range");
      }
      s.witnesses.push_back(std::move(wit));
    }
    return s;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("pool source: ") + e.what());
  }
}

std::vector<std::size_t> dominant_witnesses(const SyntheticSource& s) {
  std::vector<std::size_t> all(s.witnesses.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Subcommittee c = subcommittee(s, all);
  if (c.gamma.empty()) return {};
  const auto best = static_cast<std::size_t>(std::max_element(c.gamma.begin(), c.gamma.end()) - c.gamma.begin());
  const int aspect = c.aspects[best];
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.witnesses.size(); ++i) {
    const auto& a = s.witnesses[i].aspects;
    if (std::find(a.begin(), a.end(), aspect) != a.end()) out.push_back(i);
  }
  return out;
}

void validate_pool(const std::vector<SyntheticSource>& pool, int min_witnesses) {
  for (const auto& s : pool) {
    const auto n = dominant_witnesses(s).size();
    if (n < static_cast<std::size_t>(min_witnesses))
      throw SchemaError("pool source " + s.id + ": dominant aspect has " + std::to_string(n) + " witnesses, need " +
                        std::to_string(min_witnesses));
  }
}

icsv::CommitteeVerdict evaluate_subcommittee(const SyntheticSource& s, const std::vector<std::size_t>& witnesses,
                                             const icsv::CommitteeConfig& config) {
  const Subcommittee c = subcommittee(s, witnesses);
  if (c.gamma.empty()) throw ContractError("evaluate_subcommittee: empty committee");
  return icsv::decide(c.gamma, c.votes, c.stability, witnesses.size(), config);
}

std::vector<AblationRow> committee_ablation(const std::vector<SyntheticSource>& pool, const std::vector<int>& sizes,
                                            int trials, std::uint64_t seed, const icsv::CommitteeConfig& config) {
  if (pool.empty()) throw ContractError("committee_ablation: empty pool");
  if (trials < 1) throw ContractError("committee_ablation: trials must be >= 1");
  validate_pool(pool);
  std::vector<std::vector<std::size_t>> dominant;
  for (const auto& s : pool) dominant.push_back(dominant_witnesses(s));

  std::vector<AblationRow> rows;
  for (int n : sizes) {
    if (n < 1) throw ContractError("committee_ablation: subsample size must be >= 1");
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(n)));
    AblationRow row;
    row.n_voter = n;
    int decided = 0;
    int correct = 0;
    double conf_sum = 0.0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t src = static_cast<std::size_t>(t) % pool.size();
      const auto pick = sample_without_replacement(dominant[src], static_cast<std::size_t>(n), rng);
      const auto v = evaluate_subcommittee(pool[src], pick, config);
      conf_sum += v.conf;
      if (v.label != VerdictLabel::Undecidable) {
        ++decided;
        if (v.label == pool[src].truth) ++correct;
      }
    }
    row.n_samples = trials;
    row.non_abstention_rate = static_cast<double>(decided) / static_cast<double>(trials);
    if (decided > 0) row.conditional_accuracy = static_cast<double>(correct) / static_cast<double>(decided);
    row.mean_conf = conf_sum / static_cast<double>(trials);
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "n_voter,non_abstention_rate,conditional_accuracy,mean_conf,n_samples\n";
  for (const auto& r : rows) {
    out << r.n_voter << ',' << r.non_abstention_rate << ',';
    if (r.conditional_accuracy) out << *r.conditional_accuracy;
    out << ',' << r.mean_conf << ',' << r.n_samples << '\n';
  }
  return out.str();
}

Json to_json(const std::vector<AblationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back(Json{{"n_voter", r.n_voter},
                       {"non_abstention_rate", r.non_abstention_rate},
                       {"conditional_accuracy", r.conditional_accuracy ? Json(*r.conditional_accuracy) : Json(nullptr)},
                       {"mean_conf", r.mean_conf},
                       {"n_samples", r.n_samples}});
  }
  return out;
}

}  // namespace citecheck::eval
