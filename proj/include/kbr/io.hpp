#pragma once

#include <filesystem>
#include <string>

#include "kbr/distribution.hpp"
#include "kbr/loss.hpp"
#include "kbr/robustness.hpp"
#include "kbr/solver.hpp"

namespace kbr {

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// CSV with header x1,...,xd,y.
Dataset parse_dataset_csv(const std::string& text);
Dataset read_dataset_csv(const std::filesystem::path& path);
std::string dataset_csv(const Dataset& data);

struct StoredFit {
  LossModel loss;
  FitResult fit;
};

std::string fit_json(const LossModel& loss, const FitResult& fit);
StoredFit parse_fit_json(const std::string& text);
StoredFit load_fit(const std::filesystem::path& path);

std::string bounds_json(const LossModel& loss, const KernelModel& kernel, const std::vector<BoundsReport>& reports);

}  // namespace kbr
