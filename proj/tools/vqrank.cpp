// Command-line front end: synth, train, score, eval, inspect-branches.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vqrank/checkpoint.hpp"
#include "vqrank/corpus.hpp"
#include "vqrank/errors.hpp"
#include "vqrank/metrics.hpp"
#include "vqrank/scoring.hpp"
#include "vqrank/synthetic.hpp"
#include "vqrank/training.hpp"

namespace {

using vqr::ConfigError;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vqr::IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw vqr::IoError("cannot write " + path);
  out << text;
  out.close();
  if (!out) throw vqr::IoError("error writing " + path);
}

template <typename T>
void override_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

struct SynthFlags {
  std::string out;
  std::string config;
  std::optional<std::size_t> n, text_dim, frame_dim, frames;
  std::optional<double> p_incoherence, p_mismatch, p_visual, p_text, magnitude, noise;
  std::optional<std::uint64_t> seed;
};

vqr::SynthConfig synth_config_from_json(const nlohmann::json& j, vqr::SynthConfig c) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_records") {
        c.n_records = value.get<std::size_t>();
      } else if (key == "text_dim") {
        c.text_dim = value.get<std::size_t>();
      } else if (key == "frame_dim") {
        c.frame_dim = value.get<std::size_t>();
      } else if (key == "frames") {
        c.frames = value.get<std::size_t>();
      } else if (key == "defect_probabilities") {
        c.defect_probabilities = value.get<std::array<double, vqr::kDefectCount>>();
      } else if (key == "defect_magnitude") {
        c.defect_magnitude = value.get<double>();
      } else if (key == "noise") {
        c.noise = value.get<double>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError("synth config: unknown key \"" + key + "\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

int run_synth(const SynthFlags& f) {
  vqr::SynthConfig c;
  if (!f.config.empty()) c = synth_config_from_json(read_json_file(f.config), c);
  override_if(f.n, c.n_records);
  override_if(f.text_dim, c.text_dim);
  override_if(f.frame_dim, c.frame_dim);
  override_if(f.frames, c.frames);
  override_if(f.p_incoherence, c.defect_probabilities[0]);
  override_if(f.p_mismatch, c.defect_probabilities[1]);
  override_if(f.p_visual, c.defect_probabilities[2]);
  override_if(f.p_text, c.defect_probabilities[3]);
  override_if(f.magnitude, c.defect_magnitude);
  override_if(f.noise, c.noise);
  override_if(f.seed, c.seed);
  const vqr::SyntheticCorpus corpus = vqr::generate_corpus(c);
  vqr::save_corpus(corpus.records, f.out);
  std::cerr << "wrote " << corpus.records.size() << " records to " << f.out << "\n";
  return 0;
}

struct TrainFlags {
  std::string corpus;
  std::string validation_corpus;
  std::string config;
  std::string out_checkpoint;
  std::string history;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, model_dim, heads;
  std::optional<double> lr, dropout, alpha, tau, validation_fraction;
  std::vector<std::string> disable_branches;
};

int run_train(const TrainFlags& f) {
  vqr::TrainConfig c;
  if (!f.config.empty()) c = vqr::train_config_from_json(read_json_file(f.config), c);
  override_if(f.seed, c.seed);
  override_if(f.epochs, c.epochs);
  override_if(f.batch_size, c.batch_size);
  override_if(f.lr, c.learning_rate);
  override_if(f.dropout, c.dropout);
  override_if(f.alpha, c.loss.alpha);
  override_if(f.tau, c.loss.tau);
  override_if(f.validation_fraction, c.validation_fraction);
  if (f.model_dim) {
    c.model.model_dim = *f.model_dim;
    c.model.ffn_dim = 4 * *f.model_dim;
    c.model.mlp_hidden = std::max<std::size_t>(1, *f.model_dim / 2);
  }
  override_if(f.heads, c.model.heads);
  for (const std::string& name : f.disable_branches) {
    const auto* it = std::find(std::begin(vqr::kBranchNames), std::end(vqr::kBranchNames), name);
    if (it == std::end(vqr::kBranchNames)) throw ConfigError("unknown branch \"" + name + "\"");
    c.model.branches[static_cast<std::size_t>(it - std::begin(vqr::kBranchNames))] = false;
  }

  const auto corpus = vqr::load_corpus(f.corpus, true);
  std::optional<std::vector<vqr::VideoRecord>> validation;
  if (!f.validation_corpus.empty()) validation = vqr::load_corpus(f.validation_corpus, true);
  const vqr::TrainResult result = vqr::train(corpus, c, validation ? &*validation : nullptr);
  if (result.pairwise_degenerate) {
    std::cerr << "warning: every training grade is identical; trained on the pointwise term only\n";
  }
  vqr::save_checkpoint(result.params, result.adam, f.out_checkpoint);

  nlohmann::ordered_json history = vqr::history_to_json(result);
  history["config"] = vqr::train_config_to_json(c);
  write_text_file(f.history, history.dump(2) + "\n");
  for (const vqr::EpochRecord& e : result.history) {
    std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_pnr " << e.val_pnr << " val_auc "
              << e.val_auc << "\n";
  }
  return 0;
}

struct ScoreFlags {
  std::string corpus;
  std::string checkpoint;
  std::string out;
  std::string baseline_checkpoint;
  unsigned threads = 1;
  std::vector<std::size_t> dcg_cutoffs = vqr::kDefaultDcgCutoffs;
  bool json = false;
};

int run_score(const ScoreFlags& f) {
  const auto corpus = vqr::load_corpus(f.corpus, false);
  const vqr::Checkpoint ck = vqr::load_checkpoint(f.checkpoint);
  const auto scored = vqr::score_corpus(corpus, ck.params, f.threads);
  std::string text;
  for (const vqr::ScoredVideo& s : scored) text += vqr::scored_to_json(s).dump() + "\n";
  write_text_file(f.out, text);
  return 0;
}

int run_eval(const ScoreFlags& f) {
  const auto corpus = vqr::load_corpus(f.corpus, true);
  const vqr::Checkpoint ck = vqr::load_checkpoint(f.checkpoint);
  const vqr::RankingReport report = vqr::branch_report(corpus, ck.params, f.dcg_cutoffs, f.threads);
  nlohmann::ordered_json j = vqr::report_to_json(report);
  if (!f.baseline_checkpoint.empty()) {
    const vqr::Checkpoint base = vqr::load_checkpoint(f.baseline_checkpoint);
    const vqr::RankingReport base_report = vqr::branch_report(corpus, base.params, f.dcg_cutoffs, f.threads);
    j["baseline"] = vqr::report_to_json(base_report);
    j["relative_to_baseline"] = vqr::compare_reports(report, base_report);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_inspect(const ScoreFlags& f) {
  const auto corpus = vqr::load_corpus(f.corpus, true);
  const vqr::Checkpoint ck = vqr::load_checkpoint(f.checkpoint);
  const vqr::RankingReport report = vqr::branch_report(corpus, ck.params, f.dcg_cutoffs, f.threads);
  if (f.json) {
    std::cout << vqr::report_to_json(report).dump(2) << "\n";
  } else {
    std::cout << vqr::format_branch_report(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-branch video quality scoring on precomputed embeddings"};
  app.require_subcommand(1);

  SynthFlags synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic graded corpus");
  synth_cmd->add_option("--out", synth.out, "Output corpus (JSON lines)")->required();
  synth_cmd->add_option("--config", synth.config, "JSON config; flags override it");
  synth_cmd->add_option("--n", synth.n, "Number of records");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--text-dim", synth.text_dim);
  synth_cmd->add_option("--frame-dim", synth.frame_dim);
  synth_cmd->add_option("--frames", synth.frames, "Frames per video (<= 20)");
  synth_cmd->add_option("--p-incoherence", synth.p_incoherence);
  synth_cmd->add_option("--p-mismatch", synth.p_mismatch);
  synth_cmd->add_option("--p-visual", synth.p_visual);
  synth_cmd->add_option("--p-text", synth.p_text);
  synth_cmd->add_option("--magnitude", synth.magnitude, "Defect magnitude");
  synth_cmd->add_option("--noise", synth.noise, "Per-embedding noise norm");

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--corpus", train.corpus, "Graded training corpus")->required();
  train_cmd->add_option("--validation-corpus", train.validation_corpus,
                        "Held-out corpus for per-epoch metrics (replaces the split)");
  train_cmd->add_option("--config", train.config, "JSON config; flags override it");
  train_cmd->add_option("--out-checkpoint", train.out_checkpoint)->required();
  train_cmd->add_option("--history", train.history, "Per-epoch history JSON")->required();
  train_cmd->add_option("--seed", train.seed, "Seed for init, split, shuffling and dropout");
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--dropout", train.dropout);
  train_cmd->add_option("--alpha", train.alpha, "Pointwise weight of the combined loss");
  train_cmd->add_option("--tau", train.tau, "Pairwise hinge margin");
  train_cmd->add_option("--validation-fraction", train.validation_fraction);
  train_cmd->add_option("--model-dim", train.model_dim, "Model width d (FFN 4d, MLP hidden d/2)");
  train_cmd->add_option("--heads", train.heads);
  train_cmd->add_option("--disable-branch", train.disable_branches, "vtmab, fcab, fqab or tqab; repeatable");

  ScoreFlags score;
  CLI::App* score_cmd = app.add_subcommand("score", "Score a corpus as JSON lines");
  score_cmd->add_option("--corpus", score.corpus)->required();
  score_cmd->add_option("--checkpoint", score.checkpoint)->required();
  score_cmd->add_option("--out", score.out)->required();
  score_cmd->add_option("--threads", score.threads, "Worker threads, 0 = all cores");

  ScoreFlags eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Print ranking metrics as JSON");
  eval_cmd->add_option("--corpus", eval.corpus, "Graded corpus")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--baseline-checkpoint", eval.baseline_checkpoint, "Also report deltas against this model");
  eval_cmd->add_option("--dcg", eval.dcg_cutoffs, "DCG cutoffs");
  eval_cmd->add_option("--threads", eval.threads, "Worker threads, 0 = all cores");

  ScoreFlags inspect;
  CLI::App* inspect_cmd = app.add_subcommand("inspect-branches", "Per-grade branch logits and branch PNR");
  inspect_cmd->add_option("--corpus", inspect.corpus, "Graded corpus")->required();
  inspect_cmd->add_option("--checkpoint", inspect.checkpoint)->required();
  inspect_cmd->add_option("--threads", inspect.threads, "Worker threads, 0 = all cores");
  inspect_cmd->add_flag("--json", inspect.json, "Print JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train);
    if (*score_cmd) return run_score(score);
    if (*eval_cmd) return run_eval(eval);
    if (*inspect_cmd) return run_inspect(inspect);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
