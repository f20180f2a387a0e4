#include "rbc/ensemble.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "rbc/features.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::string member_tag(const MemberSpec& m) {
  std::string tag = std::string(kind_name(m.learner.kind)) + "|" + m.selector + "|";
  for (const auto& c : m.columns) tag += c + ",";
  tag += "|" + m.learner.resolved().dump() + "|" + std::to_string(m.learner.seed);
  return tag;
}

LearnerConfig with_seed(LearnerConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

// Re-throws member failures with the member's position attached.
template <class F>
auto with_member_context(std::size_t index, const std::string& label, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), "member " + std::to_string(index) + " (" + label + "): " + e.what());
  }
}

}  // namespace

std::string_view combiner_name(Combiner c) {
  switch (c) {
    case Combiner::HardVote:
      return "hard_vote";
    case Combiner::SoftVote:
      return "soft_vote";
    case Combiner::Stacking:
      return "stacking";
  }
  return "?";
}

Combiner parse_combiner(std::string_view name) {
  const auto s = lower(name);
  if (s == "hard_vote" || s == "hard" || s == "hardvote") return Combiner::HardVote;
  if (s == "soft_vote" || s == "soft" || s == "softvote") return Combiner::SoftVote;
  if (s == "stacking" || s == "stack") return Combiner::Stacking;
  fail(ErrorCode::Parse, "unknown combiner '" + std::string(name) + "'");
}

std::string MemberSpec::label() const {
  std::string out(kind_name(learner.kind));
  if (selector != "all") out += "_" + selector;
  if (!columns.empty()) out += "_" + std::to_string(columns.size());
  return out;
}

void EnsembleSpec::validate() const {
  require(!members.empty(), ErrorCode::InvalidArgument, "ensemble has no members");
  if (replication_mode)
    require(members.size() >= 2 && members.size() <= 7, ErrorCode::InvalidArgument,
            "replication mode needs 2 to 7 members, got " + std::to_string(members.size()));
  for (const auto& m : members) {
    m.learner.resolved();
    if (m.columns.empty() && m.selector != "all") parse_group(m.selector);
  }
  if (!weights.empty()) {
    require(weights.size() == members.size(), ErrorCode::InvalidArgument,
            "ensemble has " + std::to_string(members.size()) + " members but " + std::to_string(weights.size()) +
                " weights");
    double total = 0.0;
    for (double w : weights) {
      require(std::isfinite(w) && w >= 0.0, ErrorCode::InvalidArgument, "member weights must be finite and >= 0");
      total += w;
    }
    require(total > 0.0, ErrorCode::InvalidArgument, "member weights sum to zero");
  }
  if (combiner == Combiner::Stacking) {
    require(stacking.n_folds >= 2, ErrorCode::InvalidArgument, "stacking needs at least 2 folds");
    stacking.meta.resolved();
  }
}

json EnsembleSpec::to_json() const {
  json ms = json::array();
  for (const auto& m : members) {
    json j = m.learner.to_json();
    j["selector"] = m.selector;
    if (!m.columns.empty()) j["columns"] = m.columns;
    ms.push_back(std::move(j));
  }
  json j = {{"combiner", std::string(combiner_name(combiner))},
            {"members", ms},
            {"seed", seed},
            {"replication_mode", replication_mode}};
  if (!weights.empty()) j["weights"] = weights;
  if (combiner == Combiner::Stacking)
    j["stacking"] = {{"n_folds", stacking.n_folds},
                     {"meta", stacking.meta.to_json()},
                     {"meta_input", stacking.probabilities ? "probabilities" : "labels"}};
  return j;
}

EnsembleSpec EnsembleSpec::from_json(const json& j) {
  require(j.is_object(), ErrorCode::Parse, "ensemble spec must be a JSON object");
  static const std::set<std::string> known = {"combiner", "members", "weights", "seed", "replication_mode", "stacking"};
  for (const auto& [key, value] : j.items())
    require(known.count(key) != 0, ErrorCode::Parse, "unknown ensemble spec key '" + key + "'");
  EnsembleSpec spec;
  spec.combiner = parse_combiner(j.value("combiner", std::string("soft_vote")));
  require(j.contains("members") && j["members"].is_array(), ErrorCode::Parse, "ensemble spec needs a members array");
  for (const auto& m : j["members"]) {
    MemberSpec ms;
    json learner = m;
    for (const char* key : {"selector", "group", "columns"}) learner.erase(key);
    ms.learner = LearnerConfig::from_json(learner);
    if (m.contains("selector")) ms.selector = lower(m["selector"].get<std::string>());
    if (m.contains("group")) ms.selector = lower(m["group"].get<std::string>());
    if (ms.selector == "txt") ms.selector = "texture";
    if (m.contains("columns")) ms.columns = m["columns"].get<std::vector<std::string>>();
    spec.members.push_back(std::move(ms));
  }
  if (j.contains("weights")) spec.weights = j["weights"].get<std::vector<double>>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  spec.replication_mode = j.value("replication_mode", false);
  if (j.contains("stacking")) {
    const auto& s = j["stacking"];
    spec.stacking.n_folds = s.value("n_folds", 5);
    if (s.contains("meta")) spec.stacking.meta = LearnerConfig::from_json(s["meta"]);
    const auto input = s.value("meta_input", std::string("probabilities"));
    require(input == "probabilities" || input == "labels", ErrorCode::Parse,
            "meta_input must be 'probabilities' or 'labels'");
    spec.stacking.probabilities = input == "probabilities";
  }
  spec.validate();
  return spec;
}

std::vector<std::size_t> select_columns(const MemberSpec& member, const std::vector<std::string>& feature_names) {
  std::vector<std::size_t> cols;
  if (!member.columns.empty()) {
    for (const auto& name : member.columns) {
      const auto it = std::find(feature_names.begin(), feature_names.end(), name);
      require(it != feature_names.end(), ErrorCode::Schema, "selected feature '" + name + "' is not in the data");
      cols.push_back(static_cast<std::size_t>(it - feature_names.begin()));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  } else if (member.selector == "all") {
    cols = iota_indices(feature_names.size());
  } else {
    const FeatureGroup g = parse_group(member.selector);
    const auto& reg = FeatureRegistry::instance();
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
      require(reg.contains(feature_names[i]), ErrorCode::Schema,
              "feature '" + feature_names[i] + "' has no registry group; group selectors need registry names");
      if (reg.group_of(feature_names[i]) == g) cols.push_back(i);
    }
  }
  require(!cols.empty(), ErrorCode::EmptySelection, "member " + member.label() + " selects no features");
  return cols;
}

std::uint64_t member_seed(const EnsembleSpec& spec, std::size_t index) {
  const std::string tag = member_tag(spec.members[index]);
  std::uint64_t occurrence = 0;
  for (std::size_t j = 0; j < index; ++j) occurrence += member_tag(spec.members[j]) == tag;
  return derive_seed(derive_seed(spec.seed, tag), occurrence);
}

// ------------------------------------------------------------- combining --

std::vector<double> vote(Combiner combiner, const std::vector<std::vector<double>>& member_probs,
                         const std::vector<double>& weights) {
  require(!member_probs.empty(), ErrorCode::InvalidArgument, "vote needs at least one member");
  const std::size_t k = member_probs[0].size();
  std::vector<double> out(k, 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < member_probs.size(); ++m) {
    const double w = weights.empty() ? 1.0 : weights[m];
    if (w == 0.0) continue;
    total += w;
    if (combiner == Combiner::HardVote) {
      out[static_cast<std::size_t>(argmax(member_probs[m]))] += w;
    } else {
      for (std::size_t c = 0; c < k; ++c) out[c] += w * member_probs[m][c];
    }
  }
  for (double& v : out) v /= total;
  return out;
}

int vote_label(Combiner combiner, const std::vector<std::vector<double>>& member_probs,
               const std::vector<double>& weights) {
  const auto shares = vote(combiner, member_probs, weights);
  if (combiner != Combiner::HardVote) return argmax(shares);
  const double top = *std::max_element(shares.begin(), shares.end());
  std::vector<std::size_t> tied;
  for (std::size_t c = 0; c < shares.size(); ++c)
    if (shares[c] >= top - 1e-12) tied.push_back(c);
  if (tied.size() == 1) return static_cast<int>(tied[0]);
  const auto mass = vote(Combiner::SoftVote, member_probs, weights);
  std::size_t best = tied[0];
  for (std::size_t c : tied)
    if (mass[c] > mass[best]) best = c;
  return static_cast<int>(best);
}

// -------------------------------------------------------------- the model --

EnsembleModel::EnsembleModel(Combiner combiner, std::vector<FittedMember> members, std::vector<double> weights,
                             std::unique_ptr<Classifier> meta, bool meta_probabilities, std::size_t n_features,
                             int n_classes)
    : Classifier(n_features, n_classes), combiner_(combiner), members_(std::move(members)),
      weights_(std::move(weights)), meta_(std::move(meta)), meta_probabilities_(meta_probabilities) {
  require(!members_.empty(), ErrorCode::InvalidArgument, "ensemble has no members");
  require(combiner_ != Combiner::Stacking || meta_, ErrorCode::InvalidArgument, "stacking ensemble lacks a meta-learner");
  for (const auto& m : members_)
    for (auto c : m.columns)
      require(c < n_features, ErrorCode::Schema, "member column index out of range");
}

void EnsembleModel::member_outputs(std::span<const double> x, std::vector<std::vector<double>>& probs) const {
  check_width(x);
  probs.resize(members_.size());
  std::vector<double> slice;
  for (std::size_t m = 0; m < members_.size(); ++m) {
    const auto& mem = members_[m];
    slice.resize(mem.columns.size());
    for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = x[mem.columns[i]];
    probs[m].resize(static_cast<std::size_t>(n_classes()));
    mem.model->predict_proba(slice, probs[m]);
  }
}

std::size_t EnsembleModel::meta_width() const {
  return members_.size() * (meta_probabilities_ ? static_cast<std::size_t>(n_classes()) : 1);
}

std::vector<double> EnsembleModel::meta_features(std::span<const double> x) const {
  std::vector<std::vector<double>> probs;
  member_outputs(x, probs);
  std::vector<double> row;
  row.reserve(meta_width());
  for (const auto& p : probs) {
    if (meta_probabilities_) {
      row.insert(row.end(), p.begin(), p.end());
    } else {
      row.push_back(static_cast<double>(argmax(p)));
    }
  }
  return row;
}

void EnsembleModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  if (combiner_ == Combiner::Stacking) {
    meta_->predict_proba(meta_features(x), out);
    return;
  }
  std::vector<std::vector<double>> probs;
  member_outputs(x, probs);
  const auto v = vote(combiner_, probs, weights_);
  std::copy(v.begin(), v.end(), out.begin());
}

int EnsembleModel::predict(std::span<const double> x) const {
  if (combiner_ != Combiner::HardVote) return Classifier::predict(x);
  std::vector<std::vector<double>> probs;
  member_outputs(x, probs);
  return vote_label(combiner_, probs, weights_);
}

json EnsembleModel::to_json() const {
  json ms = json::array();
  for (const auto& m : members_)
    ms.push_back({{"label", m.label}, {"columns", m.columns}, {"model", m.model->to_json()}});
  return {{"learner_kind", "ENSEMBLE"},
          {"n_features", n_features()},
          {"n_classes", n_classes()},
          {"state",
           {{"combiner", std::string(combiner_name(combiner_))},
            {"weights", weights_},
            {"meta_input", meta_probabilities_ ? "probabilities" : "labels"},
            {"members", ms},
            {"meta", meta_ ? meta_->to_json() : json(nullptr)}}}};
}

std::unique_ptr<Classifier> classifier_from_json(const json& j) {
  require(j.is_object() && j.contains("learner_kind"), ErrorCode::Parse, "model state needs 'learner_kind'");
  if (j.at("learner_kind") != "ENSEMBLE") return learner_from_json(j);
  const auto& s = j.at("state");
  std::vector<FittedMember> members;
  for (const auto& m : s.at("members"))
    members.push_back({classifier_from_json(m.at("model")), m.at("columns").get<std::vector<std::size_t>>(),
                       m.value("label", std::string())});
  std::unique_ptr<Classifier> meta;
  if (!s.at("meta").is_null()) meta = classifier_from_json(s.at("meta"));
  return std::make_unique<EnsembleModel>(parse_combiner(s.at("combiner").get<std::string>()), std::move(members),
                                         s.at("weights").get<std::vector<double>>(), std::move(meta),
                                         s.at("meta_input") == "probabilities", j.at("n_features").get<std::size_t>(),
                                         j.at("n_classes").get<int>());
}

// ---------------------------------------------------------------- fitting --

namespace {

std::vector<FittedMember> fit_members(const LabeledDataset& train, const EnsembleSpec& spec) {
  std::vector<FittedMember> members(spec.members.size());
  parallel_for(spec.members.size(), [&](std::size_t i) {
    const auto& ms = spec.members[i];
    members[i] = with_member_context(i, ms.label(), [&] {
      auto cols = select_columns(ms, train.feature_names);
      auto model = fit_learner(train.select_columns(cols), with_seed(ms.learner, member_seed(spec, i)));
      return FittedMember{std::move(model), std::move(cols), ms.label()};
    });
  });
  return members;
}

}  // namespace

std::unique_ptr<EnsembleModel> fit_voting(const LabeledDataset& train, const EnsembleSpec& spec) {
  spec.validate();
  require(spec.combiner != Combiner::Stacking, ErrorCode::InvalidArgument, "fit_voting needs a voting combiner");
  require(train.size() > 0, ErrorCode::EmptyData, "cannot fit an ensemble on an empty training set");
  return std::make_unique<EnsembleModel>(spec.combiner, fit_members(train, spec), spec.weights, nullptr, true,
                                         train.dim(), train.n_classes);
}

std::vector<int> stacking_folds(const LabeledDataset& train, const EnsembleSpec& spec) {
  return stratified_folds(train.labels, train.n_classes, spec.stacking.n_folds,
                          derive_seed(spec.seed, "stacking-folds"));
}

Matrix out_of_fold_outputs(const LabeledDataset& train, const LearnerConfig& learner,
                           const std::vector<std::size_t>& columns, const std::vector<int>& fold_of, int n_folds,
                           bool probabilities) {
  const auto k = static_cast<std::size_t>(train.n_classes);
  Matrix out(train.size(), probabilities ? k : 1);
  const auto sliced = train.select_columns(columns);
  parallel_for(static_cast<std::size_t>(n_folds), [&](std::size_t f) {
    std::vector<std::size_t> fit_rows, held_rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      (static_cast<std::size_t>(fold_of[i]) == f ? held_rows : fit_rows).push_back(i);
    if (held_rows.empty()) return;
    auto model = fit_learner(sliced.subset(fit_rows), with_seed(learner, derive_seed(learner.seed, f + 1)));
    const auto held = sliced.features.select_rows(held_rows);
    const auto p = model->predict_proba(held);
    for (std::size_t r = 0; r < held_rows.size(); ++r) {
      if (probabilities) {
        for (std::size_t c = 0; c < k; ++c) out(held_rows[r], c) = p(r, c);
      } else {
        out(held_rows[r], 0) = static_cast<double>(argmax(p.row(r)));
      }
    }
  });
  return out;
}

LabeledDataset meta_dataset(const std::vector<const Matrix*>& blocks, const std::vector<int>& labels, int n_classes,
                            const std::vector<std::string>& member_labels, bool probabilities) {
  LabeledDataset ds;
  ds.n_classes = n_classes;
  ds.labels = labels;
  ds.standardized = true;  // bounded member outputs; no rescaling needed
  std::size_t width = 0;
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    width += blocks[m]->cols();
    for (std::size_t c = 0; c < blocks[m]->cols(); ++c) {
      const std::string suffix =
          probabilities ? "p_" + (c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c)) : "label";
      ds.feature_names.push_back(std::to_string(m) + ":" + member_labels[m] + "." + suffix);
    }
  }
  ds.features = Matrix(labels.size(), width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t col = 0;
    for (const auto* b : blocks)
      for (std::size_t c = 0; c < b->cols(); ++c) ds.features(i, col++) = (*b)(i, c);
    ds.ids.push_back(std::to_string(i));
  }
  return ds;
}

std::unique_ptr<EnsembleModel> fit_stacking(const LabeledDataset& train, const EnsembleSpec& spec,
                                            StackingDiagnostics* diagnostics) {
  spec.validate();
  require(spec.combiner == Combiner::Stacking, ErrorCode::InvalidArgument, "fit_stacking needs a stacking spec");
  require(train.size() > 0, ErrorCode::EmptyData, "cannot fit an ensemble on an empty training set");
  const auto fold_of = stacking_folds(train, spec);
  const int n_folds = spec.stacking.n_folds;

  std::vector<Matrix> blocks(spec.members.size());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < spec.members.size(); ++i) {
    const auto& ms = spec.members[i];
    labels.push_back(ms.label());
    blocks[i] = with_member_context(i, ms.label(), [&] {
      return out_of_fold_outputs(train, with_seed(ms.learner, member_seed(spec, i)),
                                 select_columns(ms, train.feature_names), fold_of, n_folds,
                                 spec.stacking.probabilities);
    });
  }
  std::vector<const Matrix*> ptrs;
  for (const auto& b : blocks) ptrs.push_back(&b);
  const auto meta_ds = meta_dataset(ptrs, train.labels, train.n_classes, labels, spec.stacking.probabilities);
  auto meta = fit_learner(meta_ds, with_seed(spec.stacking.meta,
                                             derive_seed(derive_seed(spec.seed, "meta"), spec.stacking.meta.seed)));

  if (diagnostics) {
    diagnostics->fold_of = fold_of;
    diagnostics->train_rows.assign(static_cast<std::size_t>(n_folds), {});
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      for (int f = 0; f < n_folds; ++f)
        if (fold_of[i] != f) diagnostics->train_rows[static_cast<std::size_t>(f)].push_back(i);
    diagnostics->meta_features = meta_ds.features;
  }
  return std::make_unique<EnsembleModel>(Combiner::Stacking, fit_members(train, spec), spec.weights, std::move(meta),
                                         spec.stacking.probabilities, train.dim(), train.n_classes);
}

std::unique_ptr<EnsembleModel> fit_ensemble(const LabeledDataset& train, const EnsembleSpec& spec,
                                            StackingDiagnostics* diagnostics) {
  if (spec.combiner == Combiner::Stacking) return fit_stacking(train, spec, diagnostics);
  return fit_voting(train, spec);
}

}  // namespace rbc
