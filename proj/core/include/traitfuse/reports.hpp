#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "traitfuse/training.hpp"

namespace traitfuse {

/// `epoch,train_mse,val_mse,lr`, one row per epoch.
void write_loss_csv(std::ostream& out, std::span<const EpochRecord> history);

/// `config,disabled,O,C,E,A,N,Mean,val_mse,epochs,seed`, one row per result.
/// The disabled list is `;`-separated so the row stays plain CSV.
void write_ablation_csv(std::ostream& out, std::span<const AblationResult> results);
std::string ablation_json(std::span<const AblationResult> results);

/// Per-trait and mean accuracy keyed by trait name.
std::string accuracy_json(const AccuracyReport& acc);
/// Epoch count, final losses, seed and accuracy of one training run.
std::string train_summary_json(const TrainReport& report);

/// ablation.csv, ablation.json and loss_<config>.csv under `dir`, which is
/// created if needed. Throws UsageError for an empty list, IoError when a
/// file cannot be written.
void emit_reports(std::span<const AblationResult> results, const std::filesystem::path& dir);

/// loss.csv and summary.json under `dir`.
void emit_train_report(const TrainReport& report, const std::filesystem::path& dir);

}  // namespace traitfuse
