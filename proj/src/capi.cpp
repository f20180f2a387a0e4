#include "rbc/rbc.h"

#include <cstring>
#include <optional>
#include <string>

#include "rbc/experiments.hpp"
#include "rbc/io.hpp"
#include "rbc/model.hpp"
#include "rbc/parallel.hpp"
#include "rbc/synth.hpp"

#ifndef RBC_VERSION_STRING
#define RBC_VERSION_STRING "0.0.0"
#endif

struct rbc_dataset {
  rbc::LabeledDataset data;
};

struct rbc_model {
  explicit rbc_model(rbc::TrainedModel m) : model(std::move(m)) {}
  rbc::TrainedModel model;
};

namespace {

using rbc::json;

thread_local std::string g_last_error;

template <class F>
rbc_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return RBC_OK;
  } catch (const rbc::Error& e) {
    g_last_error = e.what();
    return static_cast<rbc_status>(static_cast<int>(e.code()));
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return RBC_E_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return RBC_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RBC_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  rbc::require(p != nullptr, rbc::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  need(out, "output pointer");
  *out = copy_out(j.dump(1));
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  rbc::require(j.is_object(), rbc::ErrorCode::Parse, "options must be a JSON object");
  return j;
}

rbc::ExtractionOptions extraction_options(const json& j) {
  rbc::ExtractionOptions opts;
  if (j.contains("groups")) {
    opts.groups = {false, false, false};
    for (const auto& g : j["groups"]) opts.groups[static_cast<int>(rbc::parse_group(g.get<std::string>()))] = true;
  }
  opts.target_side = j.value("target_side", opts.target_side);
  opts.rescale = j.value("rescale", opts.rescale);
  opts.glcm_levels = j.value("glcm_levels", opts.glcm_levels);
  rbc::require(opts.target_side >= 16, rbc::ErrorCode::InvalidArgument, "target_side must be at least 16 px");
  return opts;
}

json suite_json(const rbc::ConfusionMatrix& cm) {
  const auto suite = rbc::compute_suite(cm);
  json percent = json::object();
  for (const auto& id : rbc::metric_ids()) percent[id] = rbc::format_percent(rbc::metric_value(suite, id));
  return {{"matrix", rbc::matrix_to_json(cm)}, {"metrics", suite.to_json()}, {"percent", percent}};
}

json evaluation_json(const rbc::Evaluation& ev, const std::string& label) {
  return {{"matrix", rbc::matrix_to_json(ev.matrix)},
          {"metrics", ev.suite.to_json()},
          {"markdown_row", "| " + label + " | " + rbc::format_percent(ev.suite.f1_weighted) + "% | " +
                               rbc::format_percent(ev.suite.sds) + "% |"}};
}

}  // namespace

extern "C" {

const char* rbc_version(void) { return RBC_VERSION_STRING; }

int rbc_format_version(void) { return rbc::kFormatVersion; }

const char* rbc_status_name(rbc_status status) {
  if (status == RBC_OK) return "ok";
  if (status == RBC_E_INTERNAL) return "internal";
  if (status >= RBC_E_INVALID_ARGUMENT && status <= RBC_E_PARSE)
    return rbc::error_code_name(static_cast<rbc::ErrorCode>(static_cast<int>(status)));
  return "unknown";
}

const char* rbc_last_error(void) { return g_last_error.c_str(); }

void rbc_string_free(char* s) { std::free(s); }

rbc_status rbc_set_threads(int threads) {
  return guarded([&] {
    rbc::require(threads >= 0, rbc::ErrorCode::InvalidArgument, "thread count must be >= 0 (0 = auto)");
    rbc::set_thread_count(threads);
  });
}

void rbc_set_log_level(int level) { rbc::set_log_level(level); }

rbc_status rbc_registry_json(char** out_json) {
  return guarded([&] {
    const auto& reg = rbc::FeatureRegistry::instance();
    json features = json::array();
    for (const auto& name : reg.names())
      features.push_back({{"name", name}, {"group", std::string(rbc::group_name(reg.group_of(name)))}});
    json groups = json::object();
    for (auto g : {rbc::FeatureGroup::Shape, rbc::FeatureGroup::Texture, rbc::FeatureGroup::Color})
      groups[std::string(rbc::group_name(g))] = reg.count(g);
    emit(out_json, {{"schema_hash", reg.digest()}, {"count", reg.size()}, {"groups", groups}, {"features", features}});
  });
}

rbc_status rbc_registry_hash(char** out_hash) {
  return guarded([&] {
    need(out_hash, "output pointer");
    *out_hash = copy_out(rbc::FeatureRegistry::instance().digest());
  });
}

rbc_status rbc_dataset_load(const char* path, const char* options_json, rbc_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output pointer");
    *out = nullptr;
    const auto opts = extraction_options(parse_options(options_json));
    auto ds = std::make_unique<rbc_dataset>();
    ds->data = rbc::load_feature_table(path, opts);
    *out = ds.release();
  });
}

rbc_status rbc_dataset_save_csv(const rbc_dataset* ds, const char* path) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    rbc::write_feature_csv(ds->data, path);
  });
}

rbc_status rbc_dataset_info(const rbc_dataset* ds, char** out_json) {
  return guarded([&] {
    need(ds, "dataset");
    const auto& d = ds->data;
    json counts = json::object();
    std::size_t unlabeled = 0;
    for (int c = 0; c < d.n_classes; ++c) counts[std::string(rbc::class_name(c))] = 0;
    for (int l : d.labels) {
      if (l < 0)
        ++unlabeled;
      else
        counts[std::string(rbc::class_name(l))] = counts[std::string(rbc::class_name(l))].get<std::size_t>() + 1;
    }
    emit(out_json, {{"rows", d.size()},
                    {"features", d.dim()},
                    {"schema_hash", d.schema_hash()},
                    {"labeled", d.fully_labeled()},
                    {"unlabeled_rows", unlabeled},
                    {"class_counts", counts}});
  });
}

size_t rbc_dataset_rows(const rbc_dataset* ds) { return ds ? ds->data.size() : 0; }

void rbc_dataset_free(rbc_dataset* ds) { delete ds; }

rbc_status rbc_synth_write(const char* dir, const char* options_json, size_t* out_cells) {
  return guarded([&] {
    need(dir, "directory");
    const json j = parse_options(options_json);
    rbc::SynthOptions so;
    so.n_cells = j.value("n_cells", so.n_cells);
    so.seed = j.value("seed", so.seed);
    so.canvas = j.value("canvas", so.canvas);
    so.noise = j.value("noise", so.noise);
    if (j.contains("proportions")) {
      const auto p = j["proportions"].get<std::vector<double>>();
      rbc::require(p.size() == 3, rbc::ErrorCode::InvalidArgument, "proportions needs 3 values (c, e, o)");
      so.proportions = {p[0], p[1], p[2]};
    }
    const auto entries = rbc::write_synthetic_dataset(dir, so);
    if (out_cells) *out_cells = entries.size();
  });
}

rbc_status rbc_model_train(const rbc_dataset* train, const char* spec_json, uint64_t seed, rbc_model** out) {
  return guarded([&] {
    need(train, "training dataset");
    need(spec_json, "spec");
    need(out, "output pointer");
    *out = nullptr;
    json spec;
    try {
      spec = json::parse(spec_json);
    } catch (const json::exception& e) {
      rbc::fail(rbc::ErrorCode::Parse, std::string("model spec: ") + e.what());
    }
    *out = new rbc_model(rbc::train_model(train->data, spec, seed));
  });
}

rbc_status rbc_model_load(const char* path, rbc_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "output pointer");
    *out = nullptr;
    *out = new rbc_model(rbc::TrainedModel::load(path));
  });
}

rbc_status rbc_model_save(const rbc_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->model.save(path);
  });
}

rbc_status rbc_model_info(const rbc_model* model, char** out_json) {
  return guarded([&] {
    need(model, "model");
    const auto& m = model->model;
    json info = {{"format_version", rbc::kFormatVersion},
                 {"learner_kind", m.kind()},
                 {"schema_hash", m.schema_hash()},
                 {"n_features", m.feature_names().size()},
                 {"standardized", m.standardizer().has_value()},
                 {"spec", m.spec()}};
    if (m.standardizer()) info["standardizer_fingerprint"] = m.standardizer()->fingerprint();
    if (const auto* ens = dynamic_cast<const rbc::EnsembleModel*>(&m.classifier())) {
      info["combiner"] = std::string(rbc::combiner_name(ens->combiner()));
      json members = json::array();
      for (const auto& mem : ens->members())
        members.push_back({{"label", mem.label}, {"kind", mem.model->kind_name()}, {"n_features", mem.columns.size()}});
      info["members"] = members;
    }
    emit(out_json, info);
  });
}

rbc_status rbc_model_predict(const rbc_model* model, const rbc_dataset* data, int* labels, size_t n) {
  return guarded([&] {
    need(model, "model");
    need(data, "dataset");
    need(labels, "labels");
    rbc::require(n == data->data.size(), rbc::ErrorCode::InvalidArgument,
                 "label buffer holds " + std::to_string(n) + " entries, dataset has " +
                     std::to_string(data->data.size()) + " rows");
    const auto pred = model->model.predict(data->data);
    std::copy(pred.begin(), pred.end(), labels);
  });
}

rbc_status rbc_model_predict_vector(const rbc_model* model, const double* x, size_t n, int* label, double* proba) {
  return guarded([&] {
    need(model, "model");
    need(x, "feature vector");
    const auto z = model->model.prepare(std::span<const double>(x, n));
    const auto& clf = model->model.classifier();
    if (proba) clf.predict_proba(z, std::span<double>(proba, static_cast<std::size_t>(clf.n_classes())));
    if (label) *label = clf.predict(z);
  });
}

rbc_status rbc_model_predict_csv(const rbc_model* model, const rbc_dataset* data, const char* out_path) {
  return guarded([&] {
    need(model, "model");
    need(data, "dataset");
    need(out_path, "output path");
    const auto pred = model->model.predict(data->data);
    const auto& d = data->data;
    const bool has_labels = std::any_of(d.labels.begin(), d.labels.end(), [](int l) { return l >= 0; });
    std::string out = "id";
    for (const auto& name : d.feature_names) out += "," + rbc::csv_escape(name);
    out += has_labels ? ",label,predicted\n" : ",label\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
      out += rbc::csv_escape(d.ids[i]);
      for (double v : d.features.row(i)) out += "," + rbc::format_double(v);
      if (has_labels) out += "," + (d.labels[i] >= 0 ? std::string(rbc::class_name(d.labels[i])) : std::string());
      out += "," + std::string(rbc::class_name(pred[i])) + "\n";
    }
    rbc::write_text_file(out_path, out);
  });
}

rbc_status rbc_model_evaluate(const rbc_model* model, const rbc_dataset* data, const char* label, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(data, "dataset");
    rbc::require(data->data.fully_labeled(), rbc::ErrorCode::InvalidArgument,
                 "evaluation data must be fully labeled");
    const auto ev = model->model.evaluate(data->data);
    emit(out_json, evaluation_json(ev, label && *label ? label : model->model.kind()));
  });
}

void rbc_model_free(rbc_model* model) { delete model; }

rbc_status rbc_metrics_from_matrix_csv(const char* csv_text, char** out_json) {
  return guarded([&] {
    need(csv_text, "matrix text");
    const auto cm = rbc::matrix_from_csv(csv_text);
    emit(out_json, suite_json(cm));
  });
}

rbc_status rbc_metrics_from_matrix(const int64_t* counts, int k, char** out_json) {
  return guarded([&] {
    need(counts, "counts");
    rbc::require(k >= 2, rbc::ErrorCode::InvalidArgument, "matrix needs at least 2 classes");
    std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) rows[static_cast<std::size_t>(i)].assign(counts + i * k, counts + (i + 1) * k);
    const rbc::ConfusionMatrix cm(rows);
    emit(out_json, suite_json(cm));
  });
}

rbc_status rbc_importance(const rbc_model* model, const rbc_dataset* eval, const char* method,
                          const char* options_json, char** out_json) {
  return guarded([&] {
    need(model, "model");
    const json opts = parse_options(options_json);
    const std::string m = method && *method ? method : "mdi";
    std::optional<rbc::ImportanceReport> report;
    if (m == "mdi") {
      report = rbc::mdi_importance(model->model.classifier(), model->model.feature_names());
    } else if (m == "permutation") {
      need(eval, "evaluation dataset");
      rbc::require(eval->data.fully_labeled(), rbc::ErrorCode::InvalidArgument,
                   "permutation importance needs labeled data");
      report = rbc::permutation_importance(model->model.classifier(), model->model.prepare(eval->data),
                                           opts.value("metric", std::string("accuracy")), opts.value("repeats", 5),
                                           opts.value("seed", std::uint64_t{0}));
    } else {
      rbc::fail(rbc::ErrorCode::InvalidArgument, "importance method must be 'mdi' or 'permutation'");
    }
    emit(out_json, {{"report", report->to_json()},
                    {"csv", report->to_csv()},
                    {"markdown", report->to_markdown(opts.value("max_rows", std::size_t{0}))}});
  });
}

rbc_status rbc_experiment_run(const char* plan_path, const char* overrides_json, char** out_json) {
  return guarded([&] {
    need(plan_path, "plan path");
    const json ov = parse_options(overrides_json);
    json plan_json;
    try {
      plan_json = json::parse(rbc::read_text_file(plan_path));
    } catch (const json::exception& e) {
      rbc::fail(rbc::ErrorCode::Parse, std::string(plan_path) + ": " + e.what());
    }
    // Applied before parsing so that an ensemble without its own seed picks
    // up the override; an ensemble's explicit seed still wins.
    for (const char* key : {"seed", "timing_repeats"})
      if (ov.contains(key)) plan_json[key] = ov[key];
    auto plans = rbc::plans_from_json(plan_json, std::filesystem::path(plan_path).parent_path());
    json results = json::array();
    for (auto& plan : plans) {
      if (ov.contains("output_dir")) plan.output_dir = ov["output_dir"].get<std::string>();
      const auto report = rbc::run_experiment(plan);
      json files = json::array();
      if (!plan.output_dir.empty())
        for (const auto& p : rbc::write_report(report, plan.output_dir)) files.push_back(p.string());
      results.push_back(
          {{"id", report.id}, {"files", files}, {"report", report.to_json()}, {"markdown", report.to_markdown()}});
    }
    emit(out_json, results);
  });
}

rbc_status rbc_replay_fixtures(char** out_json) {
  return guarded([&] {
    const auto report = rbc::replay_fixtures();
    emit(out_json, {{"pass", report.extras["pass"]}, {"report", report.to_json()}, {"markdown", report.to_markdown()}});
  });
}

}  // extern "C"
