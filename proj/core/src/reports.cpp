#include "traitfuse/reports.hpp"

#include <fstream>
#include <ostream>

#include <json.hpp>

#include "traitfuse/dataset.hpp"
#include "traitfuse/errors.hpp"

namespace traitfuse {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string disabled_list(const InputSet& inputs) {
  std::string s = disabled_names(inputs);
  for (auto& c : s) {
    if (c == ',') c = ';';
  }
  return s;
}

json accuracy_object(const AccuracyReport& acc) {
  json j;
  for (std::size_t k = 0; k < kTraitCount; ++k) j[std::string(kTraitNames[k])] = acc.per_trait[k];
  j["mean"] = acc.mean;
  return j;
}

json history_array(std::span<const EpochRecord> history) {
  json a = json::array();
  for (const auto& e : history) {
    a.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}, {"lr", e.lr}});
  }
  return a;
}

template <typename Writer>
void write_file(const fs::path& path, Writer writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  writer(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

void write_loss_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_mse,val_mse,lr\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << format_double(e.train_mse) << ',' << format_double(e.val_mse) << ','
        << format_double(e.lr) << '\n';
  }
}

void write_ablation_csv(std::ostream& out, std::span<const AblationResult> results) {
  out << "config,disabled";
  for (auto letter : kTraitLetters) out << ',' << letter;
  out << ",Mean,val_mse,epochs,seed\n";
  for (const auto& r : results) {
    out << r.name << ',' << disabled_list(r.inputs);
    for (double a : r.report.accuracy.per_trait) out << ',' << format_double(a);
    out << ',' << format_double(r.report.accuracy.mean) << ',' << format_double(r.final_val_mse) << ','
        << r.report.history.size() << ',' << r.seed << '\n';
  }
}

std::string ablation_json(std::span<const AblationResult> results) {
  json configs = json::array();
  for (const auto& r : results) {
    json c;
    c["config"] = r.name;
    json disabled = json::array();
    const std::string names = disabled_names(r.inputs);
    for (std::size_t pos = 0; pos < names.size();) {
      const auto comma = names.find(',', pos);
      disabled.push_back(names.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    c["disabled"] = disabled;
    c["seed"] = r.seed;
    c["epochs"] = r.report.history.size();
    c["val_mse"] = r.final_val_mse;
    c["accuracy_split"] = std::string(split_name(r.report.accuracy_split));
    c["accuracy"] = accuracy_object(r.report.accuracy);
    configs.push_back(std::move(c));
  }
  return json{{"configurations", configs}}.dump(2) + "\n";
}

std::string accuracy_json(const AccuracyReport& acc) { return accuracy_object(acc).dump(2) + "\n"; }

std::string train_summary_json(const TrainReport& report) {
  json j;
  j["seed"] = report.seed;
  j["epochs"] = report.history.size();
  j["reached_target"] = report.reached_target;
  if (!report.history.empty()) {
    const auto& last = report.history.back();
    j["final_train_mse"] = last.train_mse;
    j["final_val_mse"] = last.val_mse;
    j["final_lr"] = last.lr;
  }
  j["accuracy_split"] = std::string(split_name(report.accuracy_split));
  j["accuracy"] = accuracy_object(report.accuracy);
  j["history"] = history_array(report.history);
  return j.dump(2) + "\n";
}

void emit_reports(std::span<const AblationResult> results, const fs::path& dir) {
  if (results.empty()) throw UsageError("emit_reports: no ablation results");
  make_dir(dir);
  write_file(dir / "ablation.csv", [&](std::ostream& out) { write_ablation_csv(out, results); });
  write_file(dir / "ablation.json", [&](std::ostream& out) { out << ablation_json(results); });
  for (const auto& r : results) {
    write_file(dir / ("loss_" + r.name + ".csv"),
               [&](std::ostream& out) { write_loss_csv(out, r.report.history); });
  }
}

void emit_train_report(const TrainReport& report, const fs::path& dir) {
  make_dir(dir);
  write_file(dir / "loss.csv", [&](std::ostream& out) { write_loss_csv(out, report.history); });
  write_file(dir / "summary.json", [&](std::ostream& out) { out << train_summary_json(report); });
}

}  // namespace traitfuse
