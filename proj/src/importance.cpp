#include "rbc/importance.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "rbc/features.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace {

std::string group_label(const std::string& name) {
  const auto& reg = FeatureRegistry::instance();
  return reg.contains(name) ? std::string(group_name(reg.group_of(name))) : "other";
}

// Registry position for registry names, otherwise after the registry in column order.
std::size_t order_key(const std::string& name, std::size_t column) {
  const auto& reg = FeatureRegistry::instance();
  return reg.contains(name) ? reg.index_of(name) : reg.size() + column;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Spreads per-member scores (over each member's columns) onto the full
// schema and averages over members.
std::vector<double> combine_members(const std::vector<std::vector<double>>& member_scores,
                                    const std::vector<FittedMember>& members, std::size_t width) {
  std::vector<double> total(width, 0.0);
  for (std::size_t m = 0; m < members.size(); ++m)
    for (std::size_t i = 0; i < members[m].columns.size(); ++i) total[members[m].columns[i]] += member_scores[m][i];
  for (double& v : total) v /= static_cast<double>(members.size());
  return total;
}

std::vector<double> tree_scores(const Classifier& model, const std::string& what) {
  auto imp = model.impurity_importance();
  if (!imp) fail(ErrorCode::Unsupported, what + " (" + model.kind_name() + ") has no impurity importance");
  return *imp;
}

}  // namespace

std::string_view method_name(ImportanceMethod m) { return m == ImportanceMethod::MDI ? "mdi" : "permutation"; }

ImportanceReport make_report(ImportanceMethod method, const std::vector<std::string>& names,
                             std::vector<double> scores) {
  require(names.size() == scores.size(), ErrorCode::InvalidArgument, "importance names and scores differ in length");
  ImportanceReport r;
  r.method = method;
  r.names = names;
  r.scores = std::move(scores);
  for (const auto& n : names) r.groups.push_back(group_label(n));
  r.ranking = iota_indices(names.size());
  std::vector<std::size_t> key(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) key[i] = order_key(names[i], i);
  std::sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
    if (r.scores[a] != r.scores[b]) return r.scores[a] > r.scores[b];
    return key[a] < key[b];
  });
  return r;
}

double ImportanceReport::score(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), ErrorCode::Schema, "no importance for feature '" + std::string(name) + "'");
  return scores[static_cast<std::size_t>(it - names.begin())];
}

std::size_t ImportanceReport::rank_of(std::string_view name) const {
  for (std::size_t r = 0; r < ranking.size(); ++r)
    if (names[ranking[r]] == name) return r + 1;
  fail(ErrorCode::Schema, "no importance for feature '" + std::string(name) + "'");
}

std::vector<std::string> ImportanceReport::top(std::string_view group, std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t idx : ranking) {
    if (out.size() >= k) break;
    if (groups[idx] == group) out.push_back(names[idx]);
  }
  return out;
}

nlohmann::json ImportanceReport::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const auto i = ranking[r];
    features.push_back({{"name", names[i]}, {"group", groups[i]}, {"score", scores[i]}, {"rank", r + 1}});
  }
  nlohmann::json j = {{"method", std::string(method_name(method))}, {"features", features}};
  if (method == ImportanceMethod::Permutation) {
    j["metric"] = metric;
    j["repeats"] = repeats;
  }
  return j;
}

std::string ImportanceReport::to_csv() const {
  std::ostringstream os;
  os << "name,group,score,rank\n";
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const auto i = ranking[r];
    os << names[i] << ',' << groups[i] << ',' << format_score(scores[i]) << ',' << r + 1 << '\n';
  }
  return os.str();
}

std::string ImportanceReport::to_markdown(std::size_t max_rows) const {
  std::vector<std::string> present;
  for (const auto& g : groups)
    if (std::find(present.begin(), present.end(), g) == present.end()) present.push_back(g);
  std::vector<std::vector<std::string>> cols;
  std::size_t rows = 0;
  for (const auto& g : present) {
    std::vector<std::string> col;
    for (std::size_t idx : ranking)
      if (groups[idx] == g && scores[idx] > 0.0) col.push_back(names[idx] + " (" + format_score(scores[idx]) + ")");
    rows = std::max(rows, col.size());
    cols.push_back(std::move(col));
  }
  if (max_rows) rows = std::min(rows, max_rows);
  std::ostringstream os;
  os << "| Rank |";
  for (const auto& g : present) os << ' ' << g << " |";
  os << "\n|---|";
  for (std::size_t g = 0; g < present.size(); ++g) os << "---|";
  os << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    os << "| " << r + 1 << " |";
    for (const auto& col : cols) os << ' ' << (r < col.size() ? col[r] : "") << " |";
    os << '\n';
  }
  return os.str();
}

ImportanceReport mdi_importance(const Classifier& model, const std::vector<std::string>& feature_names) {
  require(feature_names.size() == model.n_features(), ErrorCode::Schema,
          "model has " + std::to_string(model.n_features()) + " inputs but " + std::to_string(feature_names.size()) +
              " feature names were given");
  if (const auto* ens = dynamic_cast<const EnsembleModel*>(&model)) {
    std::vector<std::vector<double>> per_member;
    for (const auto& m : ens->members()) per_member.push_back(tree_scores(*m.model, "member " + m.label));
    return make_report(ImportanceMethod::MDI, feature_names,
                       combine_members(per_member, ens->members(), feature_names.size()));
  }
  return make_report(ImportanceMethod::MDI, feature_names, tree_scores(model, "model"));
}

ImportanceReport permutation_importance(const Classifier& model, const LabeledDataset& eval, std::string_view metric,
                                        int repeats, std::uint64_t seed) {
  require(repeats >= 1, ErrorCode::InvalidArgument, "permutation importance needs repeats >= 1");
  require(eval.size() > 0, ErrorCode::EmptyData, "permutation importance needs a non-empty evaluation set");
  require(eval.dim() == model.n_features(), ErrorCode::Schema, "evaluation data width does not match the model");
  MetricSuite probe;
  metric_value(probe, metric);  // rejects unknown ids before any work

  const int k = std::max(eval.n_classes, model.n_classes());
  auto score_of = [&](const std::vector<int>& predicted) {
    return metric_value(compute_suite(ConfusionMatrix::from_labels(eval.labels, predicted, k)), metric);
  };
  const double baseline = score_of(model.predict(eval.features));

  std::vector<double> drops(eval.dim(), 0.0);
  parallel_for(eval.dim(), [&](std::size_t f) {
    Rng rng(derive_seed(seed, f));
    Matrix x = eval.features;
    std::vector<double> column(eval.size());
    for (std::size_t i = 0; i < eval.size(); ++i) column[i] = x(i, f);
    auto order = iota_indices(eval.size());
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      rng.shuffle(order);
      for (std::size_t i = 0; i < eval.size(); ++i) x(i, f) = column[order[i]];
      total += baseline - score_of(model.predict(x));
    }
    drops[f] = total / repeats;
  });

  auto report = make_report(ImportanceMethod::Permutation, eval.feature_names, std::move(drops));
  report.metric = std::string(metric);
  report.repeats = repeats;
  return report;
}

// ------------------------------------------------------------- selection --

SelectionRule SelectionRule::cumulative(double mass) {
  require(mass > 0.0 && mass <= 1.0, ErrorCode::InvalidArgument, "cumulative mass must lie in (0, 1]");
  SelectionRule r;
  r.mass = mass;
  return r;
}

SelectionRule SelectionRule::top_k(std::map<std::string, std::size_t> per_group) {
  SelectionRule r;
  r.kind = Kind::TopK;
  r.k = std::move(per_group);
  return r;
}

SelectionRule SelectionRule::parse(std::string_view text) {
  std::string s(text);
  std::vector<std::string> drops;
  if (const auto semi = s.find(";drop="); semi != std::string::npos) {
    std::stringstream ds(s.substr(semi + 6));
    for (std::string g; std::getline(ds, g, ',');)
      if (!g.empty()) drops.push_back(g);
    s.resize(semi);
  }
  SelectionRule rule;
  try {
    if (s == "keep-all") {
      rule = cumulative(1.0);
    } else if (s.rfind("mass:", 0) == 0) {
      rule = cumulative(std::stod(s.substr(5)));
    } else if (s.rfind("top:", 0) == 0) {
      std::map<std::string, std::size_t> k;
      std::stringstream ss(s.substr(4));
      for (std::string item; std::getline(ss, item, ',');) {
        const auto eq = item.find('=');
        require(eq != std::string::npos, ErrorCode::Parse, "expected group=count in '" + item + "'");
        k[item.substr(0, eq)] = std::stoul(item.substr(eq + 1));
      }
      rule = top_k(std::move(k));
    } else {
      fail(ErrorCode::Parse, "unknown selection rule '" + std::string(text) + "'");
    }
  } catch (const std::logic_error&) {
    fail(ErrorCode::Parse, "malformed selection rule '" + std::string(text) + "'");
  }
  rule.drop_groups = std::move(drops);
  return rule;
}

std::string SelectionRule::describe() const {
  std::string out;
  if (kind == Kind::CumulativeMass) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mass:%g", mass);
    out = buf;
  } else {
    out = "top:";
    bool first = true;
    for (const auto& [g, n] : k) {
      out += (first ? "" : ",") + g + "=" + std::to_string(n);
      first = false;
    }
  }
  if (!drop_groups.empty()) {
    out += ";drop=";
    for (std::size_t i = 0; i < drop_groups.size(); ++i) out += (i ? "," : "") + drop_groups[i];
  }
  return out;
}

std::vector<std::string> apply_rule(const ImportanceReport& report, const SelectionRule& rule) {
  std::vector<std::string> present;
  for (const auto& g : report.groups)
    if (std::find(present.begin(), present.end(), g) == present.end()) present.push_back(g);

  std::vector<bool> keep(report.names.size(), false);
  for (const auto& g : present) {
    if (std::find(rule.drop_groups.begin(), rule.drop_groups.end(), g) != rule.drop_groups.end()) continue;
    std::vector<std::size_t> ranked;
    double group_total = 0.0;
    for (std::size_t idx : report.ranking)
      if (report.groups[idx] == g) {
        ranked.push_back(idx);
        group_total += std::max(0.0, report.scores[idx]);
      }
    std::size_t n_keep = 0;
    if (rule.kind == SelectionRule::Kind::TopK) {
      const auto it = rule.k.find(g);
      n_keep = it == rule.k.end() ? 0 : std::min(it->second, ranked.size());
    } else if (rule.mass >= 1.0 || group_total <= 0.0) {
      // Nothing to rank by when the group carries no importance at all.
      n_keep = ranked.size();
    } else {
      double cum = 0.0;
      const double target = rule.mass * group_total * (1.0 - 1e-12);
      while (n_keep < ranked.size() && cum < target) cum += std::max(0.0, report.scores[ranked[n_keep++]]);
    }
    for (std::size_t i = 0; i < n_keep; ++i) keep[ranked[i]] = true;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out.push_back(report.names[i]);
  return out;
}

SelectionResult select_and_retrain(const EnsembleSpec& spec, const LabeledDataset& train, const SelectionRule& rule,
                                   const LabeledDataset* test, const SelectionOptions& options) {
  SelectionResult result;
  result.full = fit_ensemble(train, spec);
  const auto& members = result.full->members();

  bool used_permutation = false;
  std::vector<std::vector<double>> per_member(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (auto imp = members[m].model->impurity_importance()) {
      per_member[m] = std::move(*imp);
      continue;
    }
    require(options.permutation_fallback, ErrorCode::Unsupported,
            "member " + members[m].label + " has no impurity importance; enable the permutation fallback");
    used_permutation = true;
    const auto slice = train.select_columns(members[m].columns);
    auto scores = permutation_importance(*members[m].model, slice, options.fallback_metric, options.fallback_repeats,
                                         derive_seed(spec.seed, "selection-permutation-" + std::to_string(m)))
                      .scores;
    // Put member scores on the same footing as MDI: clipped and summing to 1.
    double total = 0.0;
    for (double& v : scores) total += (v = std::max(0.0, v));
    if (total > 0.0)
      for (double& v : scores) v /= total;
    per_member[m] = std::move(scores);
  }
  result.importance =
      make_report(used_permutation ? ImportanceMethod::Permutation : ImportanceMethod::MDI, train.feature_names,
                  combine_members(per_member, members, train.dim()));
  if (used_permutation) {
    result.importance.metric = options.fallback_metric;
    result.importance.repeats = options.fallback_repeats;
  }
  result.selected = apply_rule(result.importance, rule);

  const std::set<std::string> chosen(result.selected.begin(), result.selected.end());
  result.reduced_spec = spec;
  for (std::size_t m = 0; m < members.size(); ++m) {
    std::vector<std::string> kept;
    for (auto c : members[m].columns)
      if (chosen.count(train.feature_names[c])) kept.push_back(train.feature_names[c]);
    require(!kept.empty(), ErrorCode::EmptySelection,
            "selection rule " + rule.describe() + " leaves member " + members[m].label + " without features");
    // An untouched slice keeps its spec so the refit reproduces the original member.
    if (kept.size() != members[m].columns.size()) result.reduced_spec.members[m].columns = std::move(kept);
  }
  result.reduced = fit_ensemble(train, result.reduced_spec);

  if (test) {
    result.full_eval = evaluate(*result.full, *test);
    result.reduced_eval = evaluate(*result.reduced, *test);
  }
  return result;
}

}  // namespace rbc
