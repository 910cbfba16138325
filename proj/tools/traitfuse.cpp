#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "traitfuse/checkpoint.hpp"
#include "traitfuse/dataset.hpp"
#include "traitfuse/errors.hpp"
#include "traitfuse/gradcheck_suite.hpp"
#include "traitfuse/random.hpp"
#include "traitfuse/reports.hpp"
#include "traitfuse/synth.hpp"
#include "traitfuse/training.hpp"

namespace fs = std::filesystem;
using namespace traitfuse;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// {"model": {...}, "train": {...}}; both sections optional.
RunConfig load_run_config(const std::string& path, const Globals& g) {
  RunConfig rc;
  if (!path.empty()) {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.contains("model")) rc.model = model_config_from_json(j.at("model").dump());
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train").dump());
  }
  if (g.seed) rc.train.seed = *g.seed;
  rc.train.threads = g.threads;
  return rc;
}

// Feature grids always come from the data, so a config only needs to name
// the layer widths it wants to change.
void adopt_data_shapes(ModelConfig& cfg, const Dataset& data) {
  if (data.videos.empty() || data.videos.front().chunks.empty()) throw DataError("dataset has no videos");
  const auto& v = data.videos.front();
  cfg.face_shape = v.chunks.front().face.shape();
  cfg.context_shape = v.chunks.front().context.shape();
  cfg.audio_dim = v.chunks.front().audio.size();
  cfg.transcript_dim = v.transcript.size();
  cfg.validate();
}

int gen_synth(const std::string& spec_path, const std::string& out, const Globals& g) {
  SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_text(spec_path));
  if (g.seed) spec.seed = *g.seed;
  const auto manifest = write_synthetic_dataset(spec, out);
  std::cout << manifest.string() << '\n';
  return 0;
}

int encode_behaviours(const std::string& keypoints, const std::string& out) {
  const auto stream = load_keypoints(keypoints);
  std::ofstream csv(out, std::ios::binary);
  if (!csv) throw IoError("cannot open " + out + " for writing");
  write_behaviour_csv(csv, stream);
  return 0;
}

int train_cmd(const std::string& manifest, const std::string& config, const std::string& out, const Globals& g) {
  auto rc = load_run_config(config, g);
  const Dataset data = load_dataset(manifest);
  adopt_data_shapes(rc.model, data);
  FusionModel model = FusionModel::init(rc.model, derive_seed(rc.train.seed, {0x7A1}));
  const TrainReport report = train(model, data, rc.train);
  save_checkpoint(model, fs::path(out) / "checkpoint");
  emit_train_report(report, out);
  std::cout << train_summary_json(report);
  return 0;
}

int eval_cmd(const std::string& manifest, const std::string& checkpoint, const std::string& split,
             const Globals& g) {
  const FusionModel model = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(manifest);
  auto videos = data.split(split_from_name(split));
  if (videos.empty()) throw DataError("no videos in the " + split + " split");
  std::vector<TraitScores> targets;
  for (const auto* v : videos) targets.push_back(v->targets);
  const auto preds = predict_all(model, videos, g.threads);
  std::cout << accuracy_json(mean_accuracy(preds, targets));
  return 0;
}

int ablate_cmd(const std::string& manifest, const std::string& config, const std::string& disable,
               const std::string& out, const Globals& g) {
  auto rc = load_run_config(config, g);
  const Dataset data = load_dataset(manifest);
  adopt_data_shapes(rc.model, data);
  const auto configs = ablation_configs(disable);
  const auto results = run_ablation_study(data, rc.model, rc.train, configs);
  emit_reports(results, out);
  std::cout << ablation_json(results);
  return 0;
}

int grad_check_cmd(const Globals& g) {
  GradCheckSuiteOptions options;
  if (g.seed) options.seed = *g.seed;
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(options)) {
    std::printf("%-4s %-26s max_rel %.3e  coords %zu  small %zu (abs %.1e)  %s\n", c.passed ? "ok" : "FAIL",
                c.name.c_str(), c.max_rel_error, c.coords, c.below_resolution, c.max_small_abs_error,
                c.worst.c_str());
    ok = ok && c.passed;
  }
  std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal personality trait regression"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string spec, out, keypoints, manifest, config, checkpoint, disable, split = "test";

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset");
  gen->add_option("--spec", spec, "SynthSpec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* enc = app.add_subcommand("encode-behaviours", "Per-frame behaviour confidences as CSV");
  enc->add_option("--keypoints", keypoints, "Keypoint JSONL")->required()->check(CLI::ExistingFile);
  enc->add_option("--out", out, "CSV path")->required();

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint and reports");
  tr->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  tr->add_option("--config", config, "JSON with optional \"model\" and \"train\" sections")
      ->check(CLI::ExistingFile);
  tr->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "Print per-trait and mean accuracy as JSON");
  ev->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* ab = app.add_subcommand("ablate", "Train one fresh model per input configuration");
  ab->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ab->add_option("--config", config)->check(CLI::ExistingFile);
  ab->add_option("--disable", disable, "Comma list of behaviour,transcript,metadata,lstm")->required();
  ab->add_option("--out", out)->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every op and the model");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return gen_synth(spec, out, g);
    if (*enc) return encode_behaviours(keypoints, out);
    if (*tr) return train_cmd(manifest, config, out, g);
    if (*ev) return eval_cmd(manifest, checkpoint, split, g);
    if (*ab) return ablate_cmd(manifest, config, disable, out, g);
    if (*gc) return grad_check_cmd(g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
