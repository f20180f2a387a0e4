#include "rbc/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rbc/fixtures.hpp"
#include "rbc/io.hpp"
#include "rbc/model.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace fs = std::filesystem;

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '_' && c != '-' && c != ' ') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

LearnerConfig seeded(LearnerConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

json stacking_to_json(const StackingSpec& s) {
  return {{"n_folds", s.n_folds},
          {"meta", s.meta.to_json()},
          {"meta_input", s.probabilities ? "probabilities" : "labels"}};
}

StackingSpec stacking_from_json(const json& j) {
  // Reuse the ensemble parser so both files accept the same keys.
  const json wrapper = {{"combiner", "stacking"}, {"members", {{{"kind", "DT"}}}}, {"stacking", j}};
  return EnsembleSpec::from_json(wrapper).stacking;
}

EnsembleSpec default_reference_ensemble() {
  EnsembleSpec spec;
  spec.combiner = Combiner::Stacking;
  MemberSpec rf{LearnerConfig{LearnerKind::RF, json::object(), 0}, "shape", {}};
  MemberSpec et{LearnerConfig{LearnerKind::ET, json::object(), 0}, "texture", {}};
  spec.members = {rf, et};
  return spec;
}

}  // namespace

// ------------------------------------------------------------------ plan --

std::string_view experiment_name(ExperimentId id) {
  switch (id) {
    case ExperimentId::Exp1Voting: return "exp1_voting";
    case ExperimentId::Exp1Stacking: return "exp1_stacking";
    case ExperimentId::Exp2Groups: return "exp2_groups";
    case ExperimentId::Exp3Specialists: return "exp3_specialists";
    case ExperimentId::Exp4Importance: return "exp4_importance";
    case ExperimentId::Exp5Validation: return "exp5_validation";
  }
  return "unknown";
}

ExperimentId parse_experiment(std::string_view name) {
  const std::string key = squash(name);
  for (auto id : {ExperimentId::Exp1Voting, ExperimentId::Exp1Stacking, ExperimentId::Exp2Groups,
                  ExperimentId::Exp3Specialists, ExperimentId::Exp4Importance, ExperimentId::Exp5Validation})
    if (squash(experiment_name(id)) == key) return id;
  fail(ErrorCode::Parse, "unknown experiment '" + std::string(name) +
                             "' (expected exp1_voting, exp1_stacking, exp2_groups, exp3_specialists, "
                             "exp4_importance or exp5_validation)");
}

void Protocol::validate() const {
  if (mode == Mode::Split)
    require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::InvalidArgument,
            "test_fraction must lie in (0, 1)");
  else
    require(n_folds >= 2, ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
}

json Protocol::to_json() const {
  if (mode == Mode::Split) return {{"mode", "split"}, {"test_fraction", test_fraction}, {"stratified", true}};
  return {{"mode", "cv"}, {"n_folds", n_folds}, {"stratified", true}};
}

Protocol Protocol::from_json(const json& j) {
  Protocol p;
  if (j.is_string()) {
    const auto m = squash(j.get<std::string>());
    require(m == "split" || m == "cv", ErrorCode::Parse, "protocol must be 'split' or 'cv'");
    p.mode = m == "split" ? Mode::Split : Mode::CrossValidation;
    return p;
  }
  require(j.is_object(), ErrorCode::Parse, "protocol must be a string or an object");
  const auto m = squash(j.value("mode", std::string("split")));
  require(m == "split" || m == "cv" || m == "crossvalidation", ErrorCode::Parse,
          "protocol mode must be 'split' or 'cv'");
  p.mode = m == "split" ? Mode::Split : Mode::CrossValidation;
  p.test_fraction = j.value("test_fraction", p.test_fraction);
  p.n_folds = j.value("n_folds", j.value("folds", p.n_folds));
  p.validate();
  return p;
}

std::string Protocol::describe() const {
  if (mode == Mode::CrossValidation) return std::to_string(n_folds) + "-fold cv";
  const int test = static_cast<int>(std::lround(test_fraction * 100.0));
  return "split " + std::to_string(100 - test) + "/" + std::to_string(test);
}

void ExperimentPlan::validate() const {
  protocol.validate();
  require(!pool.empty(), ErrorCode::InvalidArgument, "learner pool is empty");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    require(std::find(kBasePool.begin(), kBasePool.end(), pool[i]) != kBasePool.end(), ErrorCode::InvalidArgument,
            "pool learner " + std::string(kind_name(pool[i])) + " is not one of the seven base learners");
    require(std::find(pool.begin(), pool.begin() + static_cast<long>(i), pool[i]) == pool.begin() + static_cast<long>(i),
            ErrorCode::InvalidArgument, "pool lists " + std::string(kind_name(pool[i])) + " twice");
  }
  for (const auto& [kind, hp] : hyperparameters) {
    require(hp.is_object(), ErrorCode::Parse, "hyperparameters for " + kind + " must be an object");
    LearnerConfig{parse_kind(kind), hp, 0}.resolved();
  }
  if (id == ExperimentId::Exp1Voting || id == ExperimentId::Exp1Stacking) {
    require(!sizes.empty(), ErrorCode::InvalidArgument, "combination sizes are empty");
    for (int r : sizes)
      require(r >= 2 && r <= 7 && static_cast<std::size_t>(r) <= pool.size(), ErrorCode::InvalidArgument,
              "combination size " + std::to_string(r) + " outside [2, " + std::to_string(std::min<std::size_t>(7, pool.size())) + "]");
  }
  if (id == ExperimentId::Exp3Specialists) {
    require(!specialist_sizes.empty(), ErrorCode::InvalidArgument, "specialist sizes are empty");
    for (int r : specialist_sizes)
      require(r == 2 || r == 3, ErrorCode::InvalidArgument, "specialist ensembles have 2 or 3 members");
  }
  require(voting != Combiner::Stacking, ErrorCode::InvalidArgument, "voting must be hard_vote or soft_vote");
  require(stacking.n_folds >= 2, ErrorCode::InvalidArgument, "stacking needs at least 2 folds");
  require(timing_repeats >= 0, ErrorCode::InvalidArgument, "timing_repeats must be >= 0");
  if (id == ExperimentId::Exp4Importance) SelectionRule::parse(selection);
  ensemble_spec().validate();
}

LearnerConfig ExperimentPlan::learner(LearnerKind kind) const {
  LearnerConfig cfg{kind, json::object(), 0};
  if (const auto it = hyperparameters.find(std::string(kind_name(kind))); it != hyperparameters.end())
    cfg.hyperparameters = it->second;
  return cfg;
}

EnsembleSpec ExperimentPlan::ensemble_spec() const {
  EnsembleSpec spec = ensemble ? *ensemble : default_reference_ensemble();
  if (!ensemble) {
    spec.seed = seed;
    spec.stacking = stacking;
  }
  for (auto& m : spec.members)
    if (m.learner.hyperparameters.empty()) m.learner.hyperparameters = learner(m.learner.kind).hyperparameters;
  return spec;
}

ExperimentPlan ExperimentPlan::from_json(const json& j, const fs::path& base_dir) {
  auto plans = plans_from_json(j, base_dir);
  require(plans.size() == 1, ErrorCode::Parse, "plan names more than one experiment");
  return plans.front();
}

std::vector<ExperimentPlan> plans_from_json(const json& j, const fs::path& base_dir) {
  require(j.is_object(), ErrorCode::Parse, "experiment plan must be a JSON object");
  static const std::vector<std::string> known = {
      "experiment", "experiments", "train", "validation", "models", "pool", "sizes", "specialist_sizes",
      "seed", "hyperparameters", "protocol", "voting", "stacking", "ensemble", "selection",
      "permutation_fallback", "timing_repeats", "extraction", "output_dir"};
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), ErrorCode::Parse,
            "unknown plan key '" + key + "'");

  ExperimentPlan base;
  try {
    if (j.contains("train")) base.train = resolve(base_dir, j["train"].get<std::string>());
    if (j.contains("validation")) base.validation = resolve(base_dir, j["validation"].get<std::string>());
    if (j.contains("models"))
      for (const auto& m : j["models"]) base.models.push_back(resolve(base_dir, m.get<std::string>()));
    if (j.contains("pool")) {
      base.pool.clear();
      for (const auto& k : j["pool"]) base.pool.push_back(parse_kind(k.get<std::string>()));
    }
    if (j.contains("sizes")) base.sizes = j["sizes"].get<std::vector<int>>();
    if (j.contains("specialist_sizes")) base.specialist_sizes = j["specialist_sizes"].get<std::vector<int>>();
    base.seed = j.value("seed", base.seed);
    if (j.contains("hyperparameters")) {
      require(j["hyperparameters"].is_object(), ErrorCode::Parse, "hyperparameters must map learner kinds to objects");
      for (const auto& [kind, hp] : j["hyperparameters"].items())
        base.hyperparameters[std::string(kind_name(parse_kind(kind)))] = hp;
    }
    if (j.contains("protocol")) base.protocol = Protocol::from_json(j["protocol"]);
    if (j.contains("voting")) {
      auto v = squash(j["voting"].get<std::string>());
      if (v == "hard" || v == "soft") v += "vote";
      base.voting = parse_combiner(v);
    }
    if (j.contains("stacking")) base.stacking = stacking_from_json(j["stacking"]);
    if (j.contains("ensemble")) {
      json e = j["ensemble"];
      if (!e.contains("seed")) e["seed"] = base.seed;
      base.ensemble = EnsembleSpec::from_json(e);
    }
    base.selection = j.value("selection", base.selection);
    base.permutation_fallback = j.value("permutation_fallback", false);
    base.timing_repeats = j.value("timing_repeats", base.timing_repeats);
    if (j.contains("extraction")) {
      const auto& x = j["extraction"];
      base.extraction.target_side = x.value("target_side", base.extraction.target_side);
      base.extraction.rescale = x.value("rescale", base.extraction.rescale);
      base.extraction.glcm_levels = x.value("glcm_levels", base.extraction.glcm_levels);
    }
    if (j.contains("output_dir")) base.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed experiment plan: ") + e.what());
  }

  std::vector<std::string> ids;
  if (j.contains("experiment")) ids.push_back(j["experiment"].get<std::string>());
  if (j.contains("experiments"))
    for (const auto& e : j["experiments"]) ids.push_back(e.get<std::string>());
  require(!ids.empty(), ErrorCode::Parse, "plan names no experiment (use \"experiment\" or \"experiments\")");
  std::vector<ExperimentPlan> plans;
  for (const auto& name : ids) {
    ExperimentPlan p = base;
    p.id = parse_experiment(name);
    p.validate();
    plans.push_back(std::move(p));
  }
  return plans;
}

std::vector<ExperimentPlan> load_plans(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return plans_from_json(j, path.parent_path());
}

json ExperimentPlan::to_json() const {
  json j = {{"experiment", std::string(experiment_name(id))}};
  if (!train.empty()) j["train"] = train.string();
  if (!validation.empty()) j["validation"] = validation.string();
  if (!models.empty()) {
    j["models"] = json::array();
    for (const auto& m : models) j["models"].push_back(m.string());
  }
  j["pool"] = json::array();
  for (auto k : pool) j["pool"].push_back(std::string(kind_name(k)));
  j["sizes"] = sizes;
  j["specialist_sizes"] = specialist_sizes;
  j["seed"] = seed;
  j["hyperparameters"] = json::object();
  for (const auto& [k, hp] : hyperparameters) j["hyperparameters"][k] = hp;
  j["protocol"] = protocol.to_json();
  j["voting"] = std::string(combiner_name(voting));
  j["stacking"] = stacking_to_json(stacking);
  j["ensemble"] = ensemble_spec().to_json();
  j["selection"] = selection;
  j["permutation_fallback"] = permutation_fallback;
  j["timing_repeats"] = timing_repeats;
  j["extraction"] = {{"target_side", extraction.target_side},
                     {"rescale", extraction.rescale},
                     {"glcm_levels", extraction.glcm_levels}};
  if (!output_dir.empty()) j["output_dir"] = output_dir.string();
  return j;
}

// ---------------------------------------------------------------- timing --

json PhaseTiming::to_json() const {
  return {{"phase", phase}, {"mean_seconds", mean_seconds}, {"std_seconds", std_seconds},
          {"repeats", repeats}, {"items", items}};
}

PhaseTiming time_phase(std::string phase, int repeats, std::size_t items, const std::function<void()>& body) {
  require(repeats >= 1, ErrorCode::InvalidArgument, "timing needs at least one repeat");
  std::vector<double> secs;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  const double mean = std::accumulate(secs.begin(), secs.end(), 0.0) / repeats;
  double var = 0.0;
  for (double s : secs) var += (s - mean) * (s - mean);
  return PhaseTiming{std::move(phase), mean, std::sqrt(var / repeats), repeats, items};
}

// --------------------------------------------------------------- reports --

json ReportRow::to_json() const {
  json j = {{"section", section}, {"label", label}, {"combiner", combiner}, {"members", members}, {"rank", rank}};
  if (matrix) {
    j["matrix"] = matrix_to_json(*matrix);
    j["metrics"] = suite.to_json();
  } else {
    j["matrix"] = nullptr;
    j["error"] = error;
  }
  if (!extras.empty()) j["extras"] = extras;
  return j;
}

json ExperimentReport::to_json(bool include_timing) const {
  json j = {{"id", id}, {"header", header}, {"rows", json::array()}};
  for (const auto& r : rows) j["rows"].push_back(r.to_json());
  if (!extras.empty()) j["extras"] = extras;
  if (include_timing) {
    j["timing"] = json::array();
    for (const auto& t : timing) j["timing"].push_back(t.to_json());
  }
  return j;
}

namespace {

std::string seconds_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", s);
  return buf;
}

std::string header_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::string ExperimentReport::to_markdown() const {
  std::ostringstream out;
  out << "# " << id << "\n\n";
  for (const auto& [key, value] : header.items())
    if (key != "plan") out << "- " << key << ": " << header_value(value) << "\n";
  std::vector<std::string> sections;
  for (const auto& r : rows)
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) sections.push_back(r.section);
  for (const auto& section : sections) {
    out << "\n";
    if (!section.empty()) out << "## " << section << "\n\n";
    out << "| Rank | Classifiers | F1-score | SDS-score | Accuracy | MCC |\n";
    out << "|---:|---|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
      if (r.section != section) continue;
      out << "| " << (r.rank ? std::to_string(r.rank) : "-") << " | " << r.label << " | ";
      if (r.ok())
        out << format_percent(r.suite.f1_weighted) << "% | " << format_percent(r.suite.sds) << "% | "
            << format_percent(r.suite.accuracy) << "% | " << format_percent(r.suite.mcc) << "% |\n";
      else
        out << "failed | failed | - | " << r.error << " |\n";
    }
  }
  if (!timing.empty()) {
    out << "\n## Running times\n\n| Phase | Mean (s) | Std (s) | Repeats | Items |\n|---|---:|---:|---:|---:|\n";
    for (const auto& t : timing)
      out << "| " << t.phase << " | " << seconds_text(t.mean_seconds) << " | " << seconds_text(t.std_seconds) << " | "
          << t.repeats << " | " << t.items << " |\n";
  }
  return out.str();
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "section,rank,label,combiner,members,f1_weighted,sds,accuracy,f1_macro,cba,mcc,matrix,error\n";
  for (const auto& r : rows) {
    out << csv_escape(r.section) << ',' << r.rank << ',' << csv_escape(r.label) << ',' << r.combiner << ','
        << csv_escape(join(r.members, ";")) << ',';
    if (r.ok()) {
      std::vector<std::string> flat;
      for (const auto& row : r.matrix->to_rows()) {
        std::vector<std::string> cells;
        for (auto v : row) cells.push_back(std::to_string(v));
        flat.push_back(join(cells, " "));
      }
      out << format_double(r.suite.f1_weighted) << ',' << format_double(r.suite.sds) << ','
          << format_double(r.suite.accuracy) << ',' << format_double(r.suite.f1_macro) << ','
          << format_double(r.suite.cba) << ',' << format_double(r.suite.mcc) << ',' << csv_escape(join(flat, "; "))
          << ",\n";
    } else {
      out << ",,,,,,," << csv_escape(r.error) << "\n";
    }
  }
  return out.str();
}

bool ExperimentReport::consistent() const {
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    if (!r.matrix) return false;
    const auto again = compute_suite(*r.matrix);
    for (const auto& id : metric_ids())
      if (std::abs(metric_value(again, id) - metric_value(r.suite, id)) > 1e-12) return false;
  }
  return true;
}

const ReportRow* ExperimentReport::find(std::string_view label, std::string_view section) const {
  for (const auto& r : rows)
    if (r.label == label && (section.empty() || r.section == section)) return &r;
  return nullptr;
}

void rank_rows(std::vector<ReportRow>& rows) {
  std::vector<std::string> sections;
  for (const auto& r : rows)
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) sections.push_back(r.section);
  std::vector<ReportRow> out;
  out.reserve(rows.size());
  for (const auto& section : sections) {
    std::vector<ReportRow*> good, bad;
    for (auto& r : rows)
      if (r.section == section) (r.ok() ? good : bad).push_back(&r);
    std::stable_sort(good.begin(), good.end(), [](const ReportRow* a, const ReportRow* b) {
      if (a->suite.sds != b->suite.sds) return a->suite.sds > b->suite.sds;
      return a->suite.f1_weighted > b->suite.f1_weighted;
    });
    int rank = 0;
    for (auto* r : good) {
      r->rank = ++rank;
      out.push_back(std::move(*r));
    }
    for (auto* r : bad) {
      r->rank = 0;
      out.push_back(std::move(*r));
    }
  }
  rows = std::move(out);
}

std::vector<fs::path> write_report(const ExperimentReport& report, const fs::path& dir) {
  const std::vector<fs::path> paths = {dir / (report.id + ".md"), dir / (report.id + ".csv"),
                                       dir / (report.id + ".json")};
  write_text_file(paths[0], report.to_markdown());
  write_text_file(paths[1], report.to_csv());
  write_text_file(paths[2], report.to_json().dump(1) + "\n");
  return paths;
}

// ------------------------------------------------------------------ data --

LabeledDataset load_feature_table(const fs::path& path, const ExtractionOptions& opts, PhaseTiming* extraction) {
  bool images = fs::is_directory(path);
  if (!images) {
    const auto text = read_text_file(path);
    const auto first = text.substr(0, text.find('\n'));
    const auto header = parse_csv(first);
    images = !header.empty() && std::find(header[0].begin(), header[0].end(), "path") != header[0].end();
    if (!images) {
      try {
        return parse_feature_csv(text);
      } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
      }
    }
  }
  const auto entries = load_entries(path);
  require(!entries.empty(), ErrorCode::EmptyData, path.string() + ": no cell images found");
  LabeledDataset ds;
  const auto t = time_phase("extraction per cell", 1, entries.size(), [&] { ds = extract_dataset(entries, opts); });
  if (extraction) {
    *extraction = t;
    extraction->mean_seconds /= static_cast<double>(entries.size());
  }
  return ds;
}

ExperimentData load_experiment_data(const ExperimentPlan& plan) {
  require(!plan.train.empty(), ErrorCode::InvalidArgument, "plan has no training data path");
  ExperimentData data;
  PhaseTiming extraction;
  extraction.repeats = 0;
  data.train = load_feature_table(plan.train, plan.extraction, &extraction);
  if (extraction.repeats > 0) data.extraction = extraction;
  if (!plan.validation.empty()) data.validation = load_feature_table(plan.validation, plan.extraction);
  return data;
}

std::vector<EvalFold> protocol_folds(const Protocol& protocol, const LabeledDataset& data, std::uint64_t seed) {
  protocol.validate();
  data.validate();
  require(data.size() > 0, ErrorCode::EmptyData, "experiment data is empty");
  require(data.fully_labeled(), ErrorCode::InvalidArgument, "experiment data contains unlabeled rows");
  const std::uint64_t s = derive_seed(seed, "protocol");
  std::vector<EvalFold> folds;
  auto standardize = [&](LabeledDataset train, LabeledDataset test) {
    const auto z = Standardizer::fit(train);
    folds.push_back({z.apply(train), z.apply(test)});
  };
  if (protocol.mode == Protocol::Mode::Split) {
    auto split = dataset_split(data, protocol.test_fraction, s);
    require(split.train.size() > 0 && split.test.size() > 0, ErrorCode::Partition,
            "split left an empty train or test side");
    standardize(std::move(split.train), std::move(split.test));
    return folds;
  }
  const auto sorted = data.sorted_by_id();
  const auto fold_of = stratified_folds(sorted.labels, sorted.n_classes, protocol.n_folds, s);
  for (int f = 0; f < protocol.n_folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? te : tr).push_back(i);
    require(!tr.empty() && !te.empty(), ErrorCode::Partition, "cv fold " + std::to_string(f) + " is empty");
    standardize(sorted.subset(tr), sorted.subset(te));
  }
  return folds;
}

std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t r) {
  std::vector<std::vector<std::size_t>> out;
  if (r == 0 || r > n) return out;
  std::vector<std::size_t> idx(r);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    out.push_back(idx);
    std::size_t i = r;
    while (i > 0 && idx[i - 1] == n - r + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t k = i; k < r; ++k) idx[k] = idx[k - 1] + 1;
  }
  return out;
}

// ------------------------------------------------------- member caching --

namespace {

// Outputs of one candidate member on one evaluation fold. A combination row
// assembles its ensemble from these blocks; since member seeds do not depend
// on the other members, the result equals fitting that ensemble directly.
struct CachedMember {
  std::uint64_t seed = 0;
  Matrix test_probs;
  Matrix oof;  // out-of-fold outputs on the fold's training rows (stacking only)
  std::string error;
};

class MemberCache {
 public:
  MemberCache(std::vector<MemberSpec> candidates, const std::vector<EvalFold>& folds, const EnsembleSpec& base,
              bool need_oof)
      : candidates_(std::move(candidates)), folds_(folds), base_(base) {
    stack_folds_.resize(folds_.size());
    if (need_oof)
      for (std::size_t f = 0; f < folds_.size(); ++f) stack_folds_[f] = stacking_folds(folds_[f].train, base_);
    cache_.assign(candidates_.size() * folds_.size(), {});
    parallel_for(cache_.size(), [&](std::size_t job) {
      const std::size_t c = job / folds_.size(), f = job % folds_.size();
      auto& slot = cache_[job];
      EnsembleSpec one = base_;
      one.members = {candidates_[c]};
      one.weights.clear();
      slot.seed = member_seed(one, 0);
      try {
        const auto& fold = folds_[f];
        const auto cols = select_columns(candidates_[c], fold.train.feature_names);
        const auto cfg = seeded(candidates_[c].learner, slot.seed);
        const auto model = fit_learner(fold.train.select_columns(cols), cfg);
        slot.test_probs = model->predict_proba(fold.test.features.select_cols(cols));
        if (need_oof)
          slot.oof = out_of_fold_outputs(fold.train, cfg, cols, stack_folds_[f], base_.stacking.n_folds,
                                         base_.stacking.probabilities);
      } catch (const Error& e) {
        slot.error = e.what();
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    });
  }

  const MemberSpec& candidate(std::size_t c) const { return candidates_[c]; }
  const CachedMember& at(std::size_t c, std::size_t f) const { return cache_[c * folds_.size() + f]; }

  // One report row: the ensemble of `members` under `combiner`, evaluated on
  // every fold with the matrices summed.
  ReportRow evaluate(const std::vector<std::size_t>& members, Combiner combiner, std::string section) const {
    ReportRow row;
    row.section = std::move(section);
    row.combiner = std::string(combiner_name(combiner));
    for (auto c : members) row.members.push_back(candidates_[c].label());
    row.label = join(row.members, ", ");
    try {
      EnsembleSpec spec = base_;
      spec.combiner = combiner;
      spec.weights.clear();
      spec.members.clear();
      for (auto c : members) spec.members.push_back(candidates_[c]);
      spec.validate();
      ConfusionMatrix cm(kNumClasses);
      for (std::size_t f = 0; f < folds_.size(); ++f) {
        for (std::size_t i = 0; i < members.size(); ++i) {
          const auto& slot = at(members[i], f);
          if (!slot.error.empty()) fail(ErrorCode::InvalidArgument, "member " + row.members[i] + ": " + slot.error);
          require(slot.seed == member_seed(spec, i), ErrorCode::InvalidArgument,
                  "member " + row.members[i] + " repeats an identical member; evaluate it with fit_ensemble");
        }
        add_fold(cm, spec, members, f, row.members);
      }
      row.suite = compute_suite(cm);
      row.matrix = std::move(cm);
    } catch (const std::exception& e) {
      row.error = e.what();
      row.matrix.reset();
    }
    return row;
  }

 private:
  void add_fold(ConfusionMatrix& cm, const EnsembleSpec& spec, const std::vector<std::size_t>& members,
                std::size_t f, const std::vector<std::string>& labels) const {
    const auto& test = folds_[f].test;
    if (spec.combiner != Combiner::Stacking) {
      std::vector<std::vector<double>> probs(members.size());
      for (std::size_t r = 0; r < test.size(); ++r) {
        for (std::size_t i = 0; i < members.size(); ++i) {
          const auto p = at(members[i], f).test_probs.row(r);
          probs[i].assign(p.begin(), p.end());
        }
        cm.add(test.labels[r], vote_label(spec.combiner, probs, spec.weights));
      }
      return;
    }
    const auto& train = folds_[f].train;
    std::vector<const Matrix*> blocks;
    for (auto c : members) blocks.push_back(&at(c, f).oof);
    const auto meta_ds = meta_dataset(blocks, train.labels, train.n_classes, labels, spec.stacking.probabilities);
    const auto meta = fit_learner(
        meta_ds, seeded(spec.stacking.meta, derive_seed(derive_seed(spec.seed, "meta"), spec.stacking.meta.seed)));
    std::vector<double> x;
    for (std::size_t r = 0; r < test.size(); ++r) {
      x.clear();
      for (auto c : members) {
        const auto p = at(c, f).test_probs.row(r);
        if (spec.stacking.probabilities)
          x.insert(x.end(), p.begin(), p.end());
        else
          x.push_back(static_cast<double>(argmax(p)));
      }
      cm.add(test.labels[r], meta->predict(x));
    }
  }

  std::vector<MemberSpec> candidates_;
  const std::vector<EvalFold>& folds_;
  EnsembleSpec base_;
  std::vector<std::vector<int>> stack_folds_;
  std::vector<CachedMember> cache_;
};

EnsembleSpec sweep_base(const ExperimentPlan& plan) {
  EnsembleSpec base;
  base.seed = plan.seed;
  base.stacking = plan.stacking;
  return base;
}

json report_header(const ExperimentPlan& plan, const LabeledDataset& data, const std::vector<EvalFold>& folds) {
  json plan_json = plan.to_json();
  for (const char* key : {"train", "validation", "models", "output_dir"}) plan_json.erase(key);
  json counts = json::object();
  const auto cc = data.class_counts();
  for (int c = 0; c < data.n_classes; ++c) counts[std::string(class_name(c))] = cc[static_cast<std::size_t>(c)];
  std::size_t n_test = 0;
  for (const auto& f : folds) n_test += f.test.size();
  return {{"experiment", std::string(experiment_name(plan.id))},
          {"format_version", kReportFormatVersion},
          {"schema_hash", data.schema_hash()},
          {"n_features", data.dim()},
          {"n_samples", data.size()},
          {"class_counts", counts},
          {"seed", plan.seed},
          {"protocol", plan.protocol.describe()},
          {"evaluated_rows", n_test},
          {"plan", plan_json}};
}

// Extraction, training and classification timings of the reference ensemble on the first fold.
void add_reference_timing(ExperimentReport& report, const ExperimentPlan& plan, const EvalFold& fold,
                          const std::optional<PhaseTiming>& extraction) {
  if (extraction) report.timing.push_back(*extraction);
  if (plan.timing_repeats == 0) return;
  try {
    const auto spec = plan.ensemble_spec();
    std::unique_ptr<EnsembleModel> model;
    report.timing.push_back(time_phase("training (reference ensemble)", plan.timing_repeats, fold.train.size(),
                                       [&] { model = fit_ensemble(fold.train, spec); }));
    report.timing.push_back(time_phase("classification (reference ensemble)", plan.timing_repeats, fold.test.size(),
                                       [&] { (void)model->predict(fold.test.features); }));
  } catch (const Error& e) {
    log_warning(std::string("reference timing skipped: ") + e.what());
  }
}

std::vector<ReportRow> evaluate_all(const MemberCache& cache,
                                    const std::vector<std::pair<std::vector<std::size_t>, Combiner>>& jobs,
                                    const std::vector<std::string>& sections) {
  std::vector<ReportRow> rows(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) { rows[i] = cache.evaluate(jobs[i].first, jobs[i].second, sections[i]); });
  return rows;
}

}  // namespace

// ------------------------------------------------------------ experiments --

ExperimentReport run_combination_sweep(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  require(plan.id == ExperimentId::Exp1Voting || plan.id == ExperimentId::Exp1Stacking, ErrorCode::InvalidArgument,
          "combination sweep needs exp1_voting or exp1_stacking");
  const auto folds = protocol_folds(plan.protocol, data.train, plan.seed);
  const Combiner combiner = plan.id == ExperimentId::Exp1Stacking ? Combiner::Stacking : plan.voting;

  std::vector<MemberSpec> candidates;
  for (auto kind : plan.pool) candidates.push_back(MemberSpec{plan.learner(kind), "all", {}});
  const MemberCache cache(candidates, folds, sweep_base(plan), combiner == Combiner::Stacking);

  std::vector<std::pair<std::vector<std::size_t>, Combiner>> jobs;
  std::vector<std::string> sections;
  for (int r : plan.sizes)
    for (auto& combo : combinations(candidates.size(), static_cast<std::size_t>(r))) {
      jobs.emplace_back(std::move(combo), combiner);
      sections.emplace_back();
    }
  ExperimentReport report;
  report.id = std::string(experiment_name(plan.id));
  report.header = report_header(plan, data.train, folds);
  report.header["combiner"] = std::string(combiner_name(combiner));
  report.rows = evaluate_all(cache, jobs, sections);
  rank_rows(report.rows);
  add_reference_timing(report, plan, folds.front(), data.extraction);
  return report;
}

ExperimentReport run_group_experiment(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  const auto folds = protocol_folds(plan.protocol, data.train, plan.seed);
  std::vector<MemberSpec> candidates;
  std::vector<std::string> sections;
  for (auto g : {FeatureGroup::Shape, FeatureGroup::Texture, FeatureGroup::Color})
    for (auto kind : plan.pool) {
      candidates.push_back(MemberSpec{plan.learner(kind), std::string(group_name(g)), {}});
      sections.push_back(std::string(group_name(g)) + " features");
    }
  const MemberCache cache(candidates, folds, sweep_base(plan), false);

  ExperimentReport report;
  report.id = std::string(experiment_name(plan.id));
  report.header = report_header(plan, data.train, folds);
  report.rows.resize(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t c) {
    ReportRow& row = report.rows[c];
    row.section = sections[c];
    row.combiner = "single";
    row.members = {candidates[c].label()};
    row.label = std::string(kind_name(candidates[c].learner.kind));
    ConfusionMatrix cm(kNumClasses);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto& slot = cache.at(c, f);
      if (!slot.error.empty()) {
        row.error = slot.error;
        return;
      }
      for (std::size_t r = 0; r < folds[f].test.size(); ++r)
        cm.add(folds[f].test.labels[r], argmax(slot.test_probs.row(r)));
    }
    row.suite = compute_suite(cm);
    row.matrix = std::move(cm);
  });
  rank_rows(report.rows);
  add_reference_timing(report, plan, folds.front(), data.extraction);
  return report;
}

ExperimentReport run_specialist_experiment(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  const auto folds = protocol_folds(plan.protocol, data.train, plan.seed);
  const std::size_t p = plan.pool.size();
  // Candidate index = group * p + learner.
  std::vector<MemberSpec> candidates;
  for (auto g : {FeatureGroup::Shape, FeatureGroup::Texture, FeatureGroup::Color})
    for (auto kind : plan.pool) candidates.push_back(MemberSpec{plan.learner(kind), std::string(group_name(g)), {}});
  const MemberCache cache(candidates, folds, sweep_base(plan), true);

  std::vector<std::pair<std::vector<std::size_t>, Combiner>> jobs;
  std::vector<std::string> sections;
  for (int size : plan.specialist_sizes) {
    for (Combiner combiner : {plan.voting, Combiner::Stacking}) {
      const std::string section = std::to_string(size) + " members (" +
                                  (size == 3 ? "shape, texture, color" : "shape, texture") + "), " +
                                  std::string(combiner_name(combiner));
      for (std::size_t s = 0; s < p; ++s)
        for (std::size_t t = 0; t < p; ++t) {
          if (size == 2) {
            jobs.push_back({{s, p + t}, combiner});
            sections.push_back(section);
            continue;
          }
          for (std::size_t c = 0; c < p; ++c) {
            jobs.push_back({{s, p + t, 2 * p + c}, combiner});
            sections.push_back(section);
          }
        }
    }
  }
  ExperimentReport report;
  report.id = std::string(experiment_name(plan.id));
  report.header = report_header(plan, data.train, folds);
  report.rows = evaluate_all(cache, jobs, sections);
  rank_rows(report.rows);
  add_reference_timing(report, plan, folds.front(), data.extraction);
  return report;
}

ExperimentReport run_importance_experiment(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  const auto folds = protocol_folds(plan.protocol, data.train, plan.seed);
  const auto spec = plan.ensemble_spec();
  const auto rule = SelectionRule::parse(plan.selection);
  SelectionOptions options;
  options.permutation_fallback = plan.permutation_fallback;

  std::vector<SelectionResult> results(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f)
    results[f] = select_and_retrain(spec, folds[f].train, rule, &folds[f].test, options);

  std::string full_label, reduced_label;
  {
    std::vector<std::string> a, b;
    for (const auto& m : spec.members) a.push_back(m.label());
    for (const auto& m : results.front().reduced_spec.members) b.push_back(m.label());
    full_label = join(a, ", ");
    reduced_label = join(b, ", ");
  }
  ConfusionMatrix full_cm(kNumClasses), reduced_cm(kNumClasses);
  const auto& names = results.front().importance.names;
  std::vector<double> mean_scores(names.size(), 0.0);
  json selected = json::array();
  bool permutation = false;
  for (const auto& r : results) {
    const auto& fm = r.full_eval->matrix;
    const auto& rm = r.reduced_eval->matrix;
    for (int i = 0; i < kNumClasses; ++i)
      for (int j = 0; j < kNumClasses; ++j) {
        full_cm.add(i, j, fm(i, j));
        reduced_cm.add(i, j, rm(i, j));
      }
    for (std::size_t i = 0; i < names.size(); ++i) mean_scores[i] += r.importance.scores[i] / folds.size();
    selected.push_back(r.selected);
    permutation = permutation || r.importance.method == ImportanceMethod::Permutation;
  }
  const auto importance =
      make_report(permutation ? ImportanceMethod::Permutation : ImportanceMethod::MDI, names, mean_scores);

  ExperimentReport report;
  report.id = std::string(experiment_name(plan.id));
  report.header = report_header(plan, data.train, folds);
  report.header["selection"] = rule.describe();
  ReportRow full;
  full.section = "feature selection";
  full.label = "all features: " + full_label;
  full.combiner = std::string(combiner_name(spec.combiner));
  for (const auto& m : spec.members) full.members.push_back(m.label());
  full.suite = compute_suite(full_cm);
  full.matrix = full_cm;
  full.extras = {{"n_features", data.train.dim()}};
  ReportRow reduced;
  reduced.section = full.section;
  reduced.label = "selected features: " + reduced_label;
  reduced.combiner = full.combiner;
  for (const auto& m : results.front().reduced_spec.members) reduced.members.push_back(m.label());
  reduced.suite = compute_suite(reduced_cm);
  reduced.matrix = reduced_cm;
  reduced.extras = {{"n_features", results.front().selected.size()}};
  report.rows = {std::move(full), std::move(reduced)};
  report.extras = {{"importance", importance.to_json()}, {"selected", selected}, {"rule", rule.describe()}};
  add_reference_timing(report, plan, folds.front(), data.extraction);
  return report;
}

ExperimentReport run_validation(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  require(data.validation.has_value(), ErrorCode::InvalidArgument,
          "exp5_validation needs a second (validation) dataset");
  const auto& validation = *data.validation;
  require(validation.size() > 0, ErrorCode::EmptyData, "validation dataset is empty");
  require(validation.fully_labeled(), ErrorCode::InvalidArgument, "validation dataset contains unlabeled rows");

  struct Candidate {
    std::string label;
    std::string combiner;
    std::vector<std::string> members;
    std::function<TrainedModel()> build;
  };
  std::vector<Candidate> candidates;
  if (!plan.models.empty()) {
    for (const auto& path : plan.models)
      candidates.push_back({path.stem().string(), "", {}, [path] { return TrainedModel::load(path); }});
  } else {
    for (auto kind : {LearnerKind::RF, LearnerKind::GB}) {
      const auto cfg = seeded(plan.learner(kind), plan.seed);
      candidates.push_back({std::string(kind_name(kind)), "single", {std::string(kind_name(kind))},
                            [&data, cfg] { return train_model(data.train, cfg); }});
    }
    const auto spec = plan.ensemble_spec();
    std::vector<std::string> labels;
    for (const auto& m : spec.members) labels.push_back(m.label());
    candidates.push_back({join(labels, ", "), std::string(combiner_name(spec.combiner)), labels,
                          [&data, spec] { return train_model(data.train, spec); }});
  }

  ExperimentReport report;
  report.id = std::string(experiment_name(plan.id));
  report.header = report_header(plan, data.train, {});
  report.header["protocol"] = "train on the first dataset, evaluate on the second";
  report.header["validation_samples"] = validation.size();
  report.header.erase("evaluated_rows");

  for (const auto& c : candidates) {
    ReportRow row;
    row.section = "validation dataset";
    row.label = c.label;
    row.combiner = c.combiner;
    row.members = c.members;
    std::optional<TrainedModel> model;
    try {
      model.emplace(c.build());
    } catch (const Error& e) {
      if (!plan.models.empty()) throw;  // an unreadable model file is not a row result
      row.error = e.what();
      report.rows.push_back(std::move(row));
      continue;
    }
    // Feature drift between model and data is never a row-local failure.
    require(model->schema_hash() == validation.schema_hash(), ErrorCode::Schema,
            "model '" + c.label + "' was trained on schema " + model->schema_hash() +
                " but the validation features have schema " + validation.schema_hash());
    if (row.combiner.empty()) {
      row.combiner = model->kind() == "ENSEMBLE" ? model->spec().value("combiner", std::string("ensemble")) : "single";
      row.members = {model->kind()};
    }
    Evaluation ev;
    if (plan.timing_repeats > 0)
      report.timing.push_back(time_phase("classification: " + c.label, plan.timing_repeats, validation.size(),
                                         [&] { ev = model->evaluate(validation); }));
    else
      ev = model->evaluate(validation);
    row.suite = ev.suite;
    row.matrix = ev.matrix;
    row.extras = {{"schema_hash", model->schema_hash()},
                  {"standardizer", model->standardizer() ? json(model->standardizer()->fingerprint()) : json(nullptr)}};
    report.rows.push_back(std::move(row));
  }
  if (data.extraction) report.timing.insert(report.timing.begin(), *data.extraction);
  return report;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const ExperimentData& data) {
  switch (plan.id) {
    case ExperimentId::Exp1Voting:
    case ExperimentId::Exp1Stacking: return run_combination_sweep(plan, data);
    case ExperimentId::Exp2Groups: return run_group_experiment(plan, data);
    case ExperimentId::Exp3Specialists: return run_specialist_experiment(plan, data);
    case ExperimentId::Exp4Importance: return run_importance_experiment(plan, data);
    case ExperimentId::Exp5Validation: return run_validation(plan, data);
  }
  fail(ErrorCode::InvalidArgument, "unknown experiment");
}

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  return run_experiment(plan, load_experiment_data(plan));
}

ExperimentReport replay_fixtures() {
  ExperimentReport report;
  report.id = "replay_fixtures";
  report.header = {{"format_version", kReportFormatVersion}, {"sds_tolerance_pp", 0.005}, {"f1_tolerance_pp", 1.0}};
  bool all_pass = true;
  for (const auto& fx : reference_fixtures()) {
    ReportRow row;
    row.section = fx.setting;
    row.label = fx.label;
    row.combiner = "fixture";
    const ConfusionMatrix cm(fx.matrix);
    row.suite = compute_suite(cm);
    row.matrix = cm;
    const double sds = 100.0 * row.suite.sds, f1 = 100.0 * row.suite.f1_weighted;
    const bool sds_ok = std::abs(sds - fx.sds_percent) <= 0.005;
    const bool f1_ok = std::abs(f1 - fx.f1_percent) <= 1.0;
    row.extras = {{"printed_sds", fx.sds_percent}, {"printed_f1", fx.f1_percent},
                  {"sds_pass", sds_ok},            {"f1_pass", f1_ok},
                  {"f1_gated", fx.f1_gated}};
    all_pass = all_pass && sds_ok && (f1_ok || !fx.f1_gated);
    report.rows.push_back(std::move(row));
  }
  report.extras = {{"pass", all_pass}};
  return report;
}

}  // namespace rbc
