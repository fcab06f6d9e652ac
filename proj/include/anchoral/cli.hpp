#pragma once

#include "anchoral/report.hpp"
#include "anchoral/runner.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace anchoral {

/// Loads embeddings, labels and optional cluster metadata named by `d`.
Dataset load_dataset(const DatasetConfig &d);

/// Entry point for the `anchoral` tool; returns the process exit code.
int run_cli(int argc, char **argv);

}  // namespace anchoral
