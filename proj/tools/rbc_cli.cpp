// Command-line front end. Talks to the library only through rbc.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rbc/rbc.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

// Raised on a non-OK status; carries the library message.
struct DomainError {
  rbc_status status;
  std::string message;
};

void check(rbc_status st) {
  if (st != RBC_OK) throw DomainError{st, rbc_last_error()};
}

// Owning wrappers around the C handles and strings.
struct Text {
  char* p = nullptr;
  Text() = default;
  Text(const Text&) = delete;
  Text& operator=(const Text&) = delete;
  ~Text() { rbc_string_free(p); }
  std::string str() const { return p ? p : ""; }
  json parse() const { return json::parse(str()); }
};

struct DatasetFree {
  void operator()(rbc_dataset* p) const { rbc_dataset_free(p); }
};
struct ModelFree {
  void operator()(rbc_model* p) const { rbc_model_free(p); }
};
using Dataset = std::unique_ptr<rbc_dataset, DatasetFree>;
using Model = std::unique_ptr<rbc_model, ModelFree>;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError{RBC_E_IO, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DomainError{RBC_E_IO, "cannot write '" + path.string() + "'"};
}

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
  std::string output_dir = ".";
  int verbose = 0;
  bool quiet = false;
};

// --config supplies defaults for global flags not given on the command line.
void apply_config(CLI::App& app, Globals& g) {
  if (g.config.empty()) return;
  json j;
  try {
    j = json::parse(slurp(g.config));
  } catch (const json::exception& e) {
    throw DomainError{RBC_E_PARSE, g.config + ": " + e.what()};
  }
  if (!j.is_object()) throw DomainError{RBC_E_PARSE, g.config + ": config must be a JSON object"};
  for (const auto& [key, _] : j.items())
    if (key != "seed" && key != "threads" && key != "output_dir" && key != "verbosity")
      throw DomainError{RBC_E_PARSE, g.config + ": unknown key '" + key + "'"};
  if (j.contains("seed") && app.count("--seed") == 0) g.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads") && app.count("--threads") == 0) g.threads = j["threads"].get<int>();
  if (j.contains("output_dir") && app.count("--output-dir") == 0) g.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("verbosity") && app.count("-v") == 0 && app.count("-q") == 0) {
    const int v = j["verbosity"].get<int>();
    g.quiet = v <= 0;
    g.verbose = v >= 2 ? 1 : 0;
  }
}

std::string registry_hash() {
  Text h;
  check(rbc_registry_hash(&h.p));
  return h.str();
}

void banner(const Globals& g, const std::string& command) {
  if (g.quiet) return;
  std::cerr << "rbc " << rbc_version() << " | " << command << " | seed " << g.seed << " | schema "
            << registry_hash() << " | format_version " << rbc_format_version() << "\n";
}

fs::path in_output_dir(const Globals& g, const std::string& explicit_path, const std::string& fallback) {
  return explicit_path.empty() ? fs::path(g.output_dir) / fallback : fs::path(explicit_path);
}

Dataset load_dataset(const std::string& path, const json& options = json::object()) {
  rbc_dataset* ds = nullptr;
  check(rbc_dataset_load(path.c_str(), options.empty() ? nullptr : options.dump().c_str(), &ds));
  return Dataset(ds);
}

Model load_model(const std::string& path) {
  rbc_model* m = nullptr;
  check(rbc_model_load(path.c_str(), &m));
  return Model(m);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// A learner given inline ("RF") or as a JSON file.
std::string learner_spec(const std::string& arg) {
  if (fs::exists(arg)) return slurp(arg);
  return json{{"kind", arg}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Red-blood-cell morphology classification: features, learners, ensembles, experiments", "rbc"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed for splits, folds and learners");
  app.add_option("--threads", g.threads, "Worker threads (0 = auto)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "JSON file with defaults for the global flags");
  app.add_option("--output-dir", g.output_dir, "Directory for outputs without an explicit path");
  app.add_flag("-v,--verbose", g.verbose, "Log progress");
  app.add_flag("-q,--quiet", g.quiet, "Only print errors");
  app.set_version_flag("--version",
                       [] {
                         return std::string("rbc ") + rbc_version() + " (format_version " +
                                std::to_string(rbc_format_version()) + ", registry " + registry_hash() + ")";
                       });

  // extract
  auto* extract = app.add_subcommand("extract", "Extract features from a manifest or class-folder directory");
  std::string manifest, groups, extract_out;
  int target_side = 0;
  extract->add_option("--manifest", manifest, "Manifest CSV (id,label,path[,mask]) or image directory")->required();
  extract->add_option("--groups", groups, "Comma-separated groups: shape,texture,color");
  extract->add_option("--target-side", target_side, "Rescale cells to this side in pixels")->check(CLI::Range(16, 4096));
  extract->add_option("-o,--out", extract_out, "Feature CSV (default <output-dir>/features.csv)");

  // train
  auto* train = app.add_subcommand("train", "Fit a learner or an ensemble and save the model");
  std::string ensemble_file, learner_arg, train_data, train_out;
  auto* ens_opt = train->add_option("--ensemble", ensemble_file, "Ensemble spec JSON");
  auto* learner_opt = train->add_option("--learner", learner_arg, "Learner kind (e.g. RF) or learner spec JSON");
  ens_opt->excludes(learner_opt);
  train->add_option("--data", train_data, "Labeled feature CSV, manifest or image directory")->required();
  train->add_option("-o,--out", train_out, "Model file (default <output-dir>/model.json)");

  // predict
  auto* predict = app.add_subcommand("predict", "Append predicted labels to a feature table");
  std::string predict_model, predict_data, predict_out;
  predict->add_option("--model", predict_model, "Model file")->required();
  predict->add_option("--data", predict_data, "Feature CSV, manifest or image directory")->required();
  predict->add_option("-o,--out", predict_out, "Output CSV (default <output-dir>/predictions.csv)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on labeled data");
  std::string eval_model, eval_data, eval_label, eval_out;
  evaluate->add_option("--model", eval_model, "Model file")->required();
  evaluate->add_option("--data", eval_data, "Labeled feature CSV, manifest or image directory")->required();
  evaluate->add_option("--label", eval_label, "Row label for the markdown table");
  evaluate->add_option("-o,--out", eval_out, "Also write the JSON result here");

  // importance
  auto* importance = app.add_subcommand("importance", "Rank features by importance");
  std::string imp_model, imp_data, imp_method = "mdi", imp_metric = "accuracy", imp_csv, imp_md;
  int imp_repeats = 5;
  std::size_t imp_rows = 0;
  importance->add_option("--model", imp_model, "Model file")->required();
  importance->add_option("--data", imp_data, "Labeled data (permutation only)");
  importance->add_option("--method", imp_method, "mdi or permutation")->check(CLI::IsMember({"mdi", "permutation"}));
  importance->add_option("--metric", imp_metric, "Permutation metric (accuracy, sds, f1_weighted, ...)");
  importance->add_option("--repeats", imp_repeats, "Permutation repeats")->check(CLI::PositiveNumber);
  importance->add_option("--rows", imp_rows, "Rows of the markdown table (0 = all)");
  importance->add_option("--csv", imp_csv, "CSV path (default <output-dir>/importance.csv)");
  importance->add_option("--md", imp_md, "Markdown path (default <output-dir>/importance.md)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Run experiment plans or replay the reference fixtures");
  experiment->require_subcommand(1);
  auto* exp_run = experiment->add_subcommand("run", "Run every experiment in a plan file");
  std::string plan_path;
  std::optional<int> timing_repeats;
  exp_run->add_option("plan", plan_path, "Plan JSON")->required();
  exp_run->add_option("--timing-repeats", timing_repeats, "Override the plan's timing repeats");
  auto* exp_replay = experiment->add_subcommand("replay-fixtures", "Recompute metrics of the reference matrices");

  // inspection and metrics
  auto* inspect_model = app.add_subcommand("inspect-model", "Describe a saved model");
  std::string inspect_path;
  inspect_model->add_option("model", inspect_path, "Model file")->required();
  auto* inspect_registry = app.add_subcommand("inspect-registry", "List the feature registry");
  bool registry_json = false;
  inspect_registry->add_flag("--json", registry_json, "Print JSON instead of a table");

  auto* metrics = app.add_subcommand("metrics", "Metric suite of a confusion matrix");
  std::string matrix_path;
  bool only_sds = false, metrics_json = false;
  metrics->add_option("--from-matrix", matrix_path, "k x k matrix CSV, rows = true class")
      ->required()
      ;
  metrics->add_flag("--sds", only_sds, "Print only the SDS-score in percent");
  metrics->add_flag("--json", metrics_json, "Print the full suite as JSON");

  auto* synth = app.add_subcommand("synth", "Write a synthetic smear dataset");
  std::string synth_out;
  std::size_t synth_cells = 600;
  std::vector<double> proportions;
  synth->add_option("-o,--out", synth_out, "Directory (default <output-dir>/synthetic)");
  synth->add_option("--cells", synth_cells, "Number of cells")->check(CLI::PositiveNumber);
  synth->add_option("--proportions", proportions, "Relative class frequencies c e o")->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    apply_config(app, g);
    rbc_set_log_level(g.quiet ? 0 : (g.verbose > 0 ? 2 : 1));
    check(rbc_set_threads(g.threads));

    if (*extract) {
      banner(g, "extract");
      json opts = json::object();
      if (!groups.empty()) opts["groups"] = split_list(groups);
      if (target_side > 0) opts["target_side"] = target_side;
      auto ds = load_dataset(manifest, opts);
      const auto out = in_output_dir(g, extract_out, "features.csv");
      check(rbc_dataset_save_csv(ds.get(), out.string().c_str()));
      Text info;
      check(rbc_dataset_info(ds.get(), &info.p));
      const auto j = info.parse();
      if (!g.quiet)
        std::cerr << "wrote " << j["rows"] << " rows x " << j["features"] << " features to " << out.string() << "\n";
    } else if (*train) {
      banner(g, "train");
      if (ensemble_file.empty() && learner_arg.empty())
        throw CLI::RequiredError("--ensemble or --learner");
      const std::string spec = ensemble_file.empty() ? learner_spec(learner_arg) : slurp(ensemble_file);
      auto ds = load_dataset(train_data);
      rbc_model* raw = nullptr;
      check(rbc_model_train(ds.get(), spec.c_str(), g.seed, &raw));
      const Model m(raw);
      const auto out = in_output_dir(g, train_out, "model.json");
      check(rbc_model_save(m.get(), out.string().c_str()));
      if (!g.quiet) std::cerr << "saved model to " << out.string() << "\n";
    } else if (*predict) {
      banner(g, "predict");
      auto m = load_model(predict_model);
      auto ds = load_dataset(predict_data);
      const auto out = in_output_dir(g, predict_out, "predictions.csv");
      check(rbc_model_predict_csv(m.get(), ds.get(), out.string().c_str()));
      if (!g.quiet) std::cerr << "wrote predictions to " << out.string() << "\n";
    } else if (*evaluate) {
      banner(g, "evaluate");
      auto m = load_model(eval_model);
      auto ds = load_dataset(eval_data);
      Text res;
      check(rbc_model_evaluate(m.get(), ds.get(), eval_label.c_str(), &res.p));
      const auto j = res.parse();
      std::cout << j.dump(1) << "\n\n| Classifiers | F1-score | SDS-score |\n|---|---:|---:|\n"
                << j["markdown_row"].get<std::string>() << "\n";
      if (!eval_out.empty()) spill(eval_out, j.dump(1) + "\n");
    } else if (*importance) {
      banner(g, "importance");
      auto m = load_model(imp_model);
      Dataset ds;
      if (imp_method == "permutation") {
        if (imp_data.empty()) throw CLI::RequiredError("--data (permutation importance)");
        ds = load_dataset(imp_data);
      }
      const json opts = {{"metric", imp_metric}, {"repeats", imp_repeats}, {"seed", g.seed}, {"max_rows", imp_rows}};
      Text res;
      check(rbc_importance(m.get(), ds.get(), imp_method.c_str(), opts.dump().c_str(), &res.p));
      const auto j = res.parse();
      spill(in_output_dir(g, imp_csv, "importance.csv"), j["csv"].get<std::string>());
      spill(in_output_dir(g, imp_md, "importance.md"), j["markdown"].get<std::string>());
      std::cout << j["markdown"].get<std::string>();
    } else if (*experiment) {
      if (*exp_replay) {
        banner(g, "experiment replay-fixtures");
        Text res;
        check(rbc_replay_fixtures(&res.p));
        const auto j = res.parse();
        std::cout << j["markdown"].get<std::string>();
        if (app.count("--output-dir")) spill(fs::path(g.output_dir) / "replay_fixtures.json", j["report"].dump(1) + "\n");
        if (!j["pass"].get<bool>()) throw DomainError{RBC_E_INVALID_ARGUMENT, "fixture replay mismatch"};
      } else {
        banner(g, "experiment run");
        json ov = json::object();
        if (app.count("--seed")) ov["seed"] = g.seed;
        if (app.count("--output-dir")) ov["output_dir"] = g.output_dir;
        if (timing_repeats) ov["timing_repeats"] = *timing_repeats;
        Text res;
        check(rbc_experiment_run(plan_path.c_str(), ov.dump().c_str(), &res.p));
        for (const auto& r : res.parse()) {
          std::cout << r["markdown"].get<std::string>() << "\n";
          for (const auto& f : r["files"])
            if (!g.quiet) std::cerr << "wrote " << f.get<std::string>() << "\n";
        }
      }
    } else if (*inspect_model) {
      auto m = load_model(inspect_path);
      Text res;
      check(rbc_model_info(m.get(), &res.p));
      std::cout << res.str() << "\n";
    } else if (*inspect_registry) {
      Text res;
      check(rbc_registry_json(&res.p));
      const auto j = res.parse();
      if (registry_json) {
        std::cout << j.dump(1) << "\n";
      } else {
        std::cout << "schema_hash " << j["schema_hash"].get<std::string>() << "\n";
        std::cout << "features " << j["count"] << " (shape " << j["groups"]["shape"] << ", texture "
                  << j["groups"]["texture"] << ", color " << j["groups"]["color"] << ")\n";
        int i = 0;
        for (const auto& f : j["features"])
          std::cout << i++ << "\t" << f["group"].get<std::string>() << "\t" << f["name"].get<std::string>() << "\n";
      }
    } else if (*metrics) {
      Text res;
      check(rbc_metrics_from_matrix_csv(slurp(matrix_path).c_str(), &res.p));
      const auto j = res.parse();
      const auto& pct = j["percent"];
      if (only_sds) {
        std::cout << pct["sds"].get<std::string>() << "\n";
      } else if (metrics_json) {
        std::cout << j.dump(1) << "\n";
      } else {
        for (const char* key : {"accuracy", "f1_weighted", "f1_macro", "f1_micro", "sds", "cba", "mcc"})
          std::cout << key << "\t" << pct[key].get<std::string>() << "\n";
      }
    } else if (*synth) {
      banner(g, "synth");
      json opts = {{"n_cells", synth_cells}, {"seed", g.seed}};
      if (!proportions.empty()) opts["proportions"] = proportions;
      const auto out = in_output_dir(g, synth_out, "synthetic");
      std::size_t n = 0;
      check(rbc_synth_write(out.string().c_str(), opts.dump().c_str(), &n));
      if (!g.quiet) std::cerr << "wrote " << n << " cells to " << out.string() << "\n";
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error [" << rbc_status_name(e.status) << "]: " << e.message << "\n";
    return kExitDomain;
  } catch (const json::exception& e) {
    std::cerr << "error [parse]: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return 0;
}
