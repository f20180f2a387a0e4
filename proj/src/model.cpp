#include "rbc/model.hpp"

#include <cstdlib>
#include <ctime>

#include "rbc/io.hpp"

namespace rbc {

namespace {

// Build timestamps only come from SOURCE_DATE_EPOCH so repeated runs write
// byte-identical files.
std::optional<std::string> creation_stamp() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (!epoch || !*epoch) return std::nullopt;
  char* end = nullptr;
  const long long secs = std::strtoll(epoch, &end, 10);
  if (*end != '\0' || secs < 0) {
    log_warning("ignoring malformed SOURCE_DATE_EPOCH '" + std::string(epoch) + "'");
    return std::nullopt;
  }
  const std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

LabeledDataset training_view(const LabeledDataset& raw, std::optional<Standardizer>& z, bool standardize) {
  raw.validate();
  require(raw.size() > 0, ErrorCode::EmptyData, "training data is empty");
  require(raw.fully_labeled(), ErrorCode::InvalidArgument, "training data contains unlabeled rows");
  LabeledDataset sorted = raw.sorted_by_id();
  if (!standardize) return sorted;
  z = Standardizer::fit(sorted);
  return z->apply(sorted);
}

}  // namespace

nlohmann::json standardizer_to_json(const Standardizer& z) {
  return {{"means", z.means()}, {"stds", z.stds()}, {"fingerprint", z.fingerprint()}};
}

Standardizer standardizer_from_json(const nlohmann::json& j) {
  require(j.contains("names") && j.contains("means") && j.contains("stds"), ErrorCode::Parse,
          "standardizer needs names, means and stds");
  Standardizer z(j.at("names").get<std::vector<std::string>>(), j.at("means").get<std::vector<double>>(),
                 j.at("stds").get<std::vector<double>>());
  if (j.contains("fingerprint"))
    require(j.at("fingerprint") == z.fingerprint(), ErrorCode::Schema,
            "standardizer statistics do not match their recorded fingerprint");
  return z;
}

TrainedModel::TrainedModel(std::vector<std::string> feature_names, std::optional<Standardizer> standardizer,
                           std::unique_ptr<Classifier> classifier, nlohmann::json spec)
    : feature_names_(std::move(feature_names)), standardizer_(std::move(standardizer)),
      classifier_(std::move(classifier)), spec_(std::move(spec)) {
  require(classifier_ != nullptr, ErrorCode::InvalidArgument, "model has no classifier");
  require(classifier_->n_features() == feature_names_.size(), ErrorCode::Schema,
          "classifier expects " + std::to_string(classifier_->n_features()) + " inputs but the schema has " +
              std::to_string(feature_names_.size()));
  if (standardizer_)
    require(standardizer_->schema_hash() == schema_hash(), ErrorCode::Schema,
            "standardizer schema does not match the model schema");
}

LabeledDataset TrainedModel::prepare(const LabeledDataset& raw) const {
  require(raw.feature_names == feature_names_, ErrorCode::Schema,
          "data schema " + raw.schema_hash() + " (" + std::to_string(raw.dim()) + " columns) does not match model schema " +
              schema_hash() + " (" + std::to_string(feature_names_.size()) + " columns)");
  raw.validate();
  if (standardizer_) return standardizer_->apply(raw);
  return raw;
}

std::vector<double> TrainedModel::prepare(std::span<const double> raw) const {
  require(raw.size() == feature_names_.size(), ErrorCode::Schema,
          "vector has " + std::to_string(raw.size()) + " values, model expects " + std::to_string(feature_names_.size()));
  if (standardizer_) return standardizer_->apply(raw);
  return {raw.begin(), raw.end()};
}

Matrix TrainedModel::predict_proba(const LabeledDataset& raw) const {
  return classifier_->predict_proba(prepare(raw).features);
}

std::vector<int> TrainedModel::predict(const LabeledDataset& raw) const {
  return classifier_->predict(prepare(raw).features);
}

Evaluation TrainedModel::evaluate(const LabeledDataset& raw) const { return rbc::evaluate(*classifier_, prepare(raw)); }

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j = {{"format_version", kFormatVersion}};
  if (const auto stamp = creation_stamp()) j["created"] = *stamp;
  j["schema_hash"] = schema_hash();
  j["feature_names"] = feature_names_;
  j["standardizer"] = standardizer_ ? standardizer_to_json(*standardizer_) : nlohmann::json(nullptr);
  j["learner_kind"] = kind();
  j["spec"] = spec_;
  j["state"] = classifier_->to_json();
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("format_version"), ErrorCode::Parse, "not a model file (no format_version)");
  const int version = j.at("format_version").get<int>();
  require(version == kFormatVersion, ErrorCode::Unsupported,
          "model format_version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kFormatVersion) + ")");
  auto names = j.at("feature_names").get<std::vector<std::string>>();
  require(j.at("schema_hash") == schema_digest(names), ErrorCode::Schema,
          "model schema_hash does not match its feature names");
  std::optional<Standardizer> z;
  if (!j.at("standardizer").is_null()) {
    auto zj = j.at("standardizer");
    zj["names"] = names;
    z = standardizer_from_json(zj);
  }
  auto classifier = classifier_from_json(j.at("state"));
  require(classifier->kind_name() == j.at("learner_kind").get<std::string>(), ErrorCode::Parse,
          "model learner_kind does not match its state");
  return TrainedModel(std::move(names), std::move(z), std::move(classifier), j.value("spec", nlohmann::json()));
}

void TrainedModel::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": malformed model: " + e.what());
  }
}

TrainedModel train_model(const LabeledDataset& raw, const LearnerConfig& cfg, bool standardize) {
  std::optional<Standardizer> z;
  const auto train = training_view(raw, z, standardize);
  return TrainedModel(train.feature_names, std::move(z), fit_learner(train, cfg), cfg.to_json());
}

TrainedModel train_model(const LabeledDataset& raw, const EnsembleSpec& spec, bool standardize) {
  std::optional<Standardizer> z;
  const auto train = training_view(raw, z, standardize);
  return TrainedModel(train.feature_names, std::move(z), fit_ensemble(train, spec), spec.to_json());
}

TrainedModel train_model(const LabeledDataset& raw, const nlohmann::json& spec, std::uint64_t seed, bool standardize) {
  require(spec.is_object(), ErrorCode::Parse, "model spec must be a JSON object");
  nlohmann::json s = spec;
  if (!s.contains("seed")) s["seed"] = seed;
  if (s.contains("members")) return train_model(raw, EnsembleSpec::from_json(s), standardize);
  return train_model(raw, LearnerConfig::from_json(s), standardize);
}

}  // namespace rbc
