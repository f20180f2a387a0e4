#include "learner_internal.hpp"

namespace rbc {

std::unique_ptr<Classifier> learner_from_json(const json& j) {
  require(j.is_object() && j.contains("learner_kind") && j.contains("state"), ErrorCode::Parse,
          "learner JSON needs 'learner_kind' and 'state'");
  const LearnerKind kind = parse_kind(j.at("learner_kind").get<std::string>());
  LearnerConfig cfg = j.contains("config") ? LearnerConfig::from_json(j.at("config")) : LearnerConfig{kind, {}, 0};
  require(cfg.kind == kind, ErrorCode::Parse, "learner kind disagrees with its config");
  const auto nf = j.at("n_features").get<std::size_t>();
  const int nc = j.at("n_classes").get<int>();
  require(nc >= 1, ErrorCode::Parse, "learner JSON has no classes");
  const json& s = j.at("state");

  switch (kind) {
    case LearnerKind::DT:
      return std::make_unique<DecisionTreeModel>(cfg, Tree::from_json(s.at("tree")), nf, nc);
    case LearnerKind::RF:
    case LearnerKind::ET: {
      std::vector<Tree> trees;
      for (const auto& t : s.at("trees")) trees.push_back(Tree::from_json(t));
      require(!trees.empty(), ErrorCode::Parse, "forest has no trees");
      return std::make_unique<ForestModel>(cfg, std::move(trees), nf, nc);
    }
    case LearnerKind::GB: {
      std::vector<std::vector<Tree>> rounds;
      for (const auto& r : s.at("rounds")) {
        std::vector<Tree> round;
        for (const auto& t : r) round.push_back(Tree::from_json(t));
        require(round.size() == static_cast<std::size_t>(nc), ErrorCode::Parse, "boosting round has wrong width");
        rounds.push_back(std::move(round));
      }
      auto init = s.at("init").get<std::vector<double>>();
      require(init.size() == static_cast<std::size_t>(nc), ErrorCode::Parse, "boosting prior has wrong width");
      return std::make_unique<GradientBoostingModel>(cfg, std::move(init), s.at("learning_rate").get<double>(),
                                                     std::move(rounds), nf, nc);
    }
    case LearnerKind::KNN: {
      const auto rows = s.at("rows").get<std::size_t>();
      auto y = s.at("y").get<std::vector<int>>();
      auto w = s.at("w").get<std::vector<double>>();
      require(y.size() == rows && w.size() == rows, ErrorCode::Parse, "neighbor store is inconsistent");
      return std::make_unique<KnnModel>(cfg, s.at("k").get<int>(),
                                        matrix_from(rows, nf, s.at("x").get<std::vector<double>>()), std::move(y),
                                        std::move(w), nc);
    }
    case LearnerKind::SVM: {
      std::vector<SvmModel::BinaryMachine> machines;
      const auto n_support = s.at("n_support").get<std::size_t>();
      for (const auto& m : s.at("machines")) {
        SvmModel::BinaryMachine bm{m.at("support").get<std::vector<std::size_t>>(),
                                   m.at("coef").get<std::vector<double>>()};
        require(bm.support.size() == bm.coef.size(), ErrorCode::Parse, "SVM machine is inconsistent");
        for (auto idx : bm.support) require(idx < n_support, ErrorCode::Parse, "SVM support index out of range");
        machines.push_back(std::move(bm));
      }
      require(machines.size() == static_cast<std::size_t>(nc), ErrorCode::Parse, "SVM has wrong machine count");
      const KernelKind kk = s.at("kernel") == "linear" ? KernelKind::Linear : KernelKind::Rbf;
      return std::make_unique<SvmModel>(cfg, kk, s.at("gamma").get<double>(),
                                        matrix_from(n_support, nf, s.at("support_vectors").get<std::vector<double>>()),
                                        std::move(machines), nf, nc);
    }
    case LearnerKind::MLP: {
      MlpNetwork net;
      net.inputs = s.at("inputs").get<std::size_t>();
      net.hidden = s.at("hidden").get<std::size_t>();
      net.outputs = s.at("outputs").get<std::size_t>();
      net.params = s.at("params").get<std::vector<double>>();
      require(net.params.size() == net.param_count() && net.inputs == nf &&
                  net.outputs == static_cast<std::size_t>(nc),
              ErrorCode::Parse, "MLP parameter block is inconsistent");
      return std::make_unique<MlpModel>(cfg, std::move(net));
    }
    case LearnerKind::LOGREG: {
      auto intercept = s.at("intercept").get<std::vector<double>>();
      require(intercept.size() == static_cast<std::size_t>(nc), ErrorCode::Parse, "intercept has wrong width");
      return std::make_unique<LogRegModel>(cfg, matrix_from(static_cast<std::size_t>(nc), nf,
                                                            s.at("coef").get<std::vector<double>>()),
                                           std::move(intercept), s.at("converged").get<bool>());
    }
  }
  fail(ErrorCode::Parse, "unsupported learner kind");
}

}  // namespace rbc
