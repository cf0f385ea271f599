#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stereopose::cli {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

/// Renders every recognised CSV in `inputs` into `out_dir` and returns the files written.
/// Recognised: training loss logs, ablation tables, compare-fit tables, confusion matrices, fit logs.
std::vector<std::filesystem::path> render_report(const std::vector<std::filesystem::path>& inputs,
                                                 const std::filesystem::path& out_dir);

}  // namespace stereopose::cli
