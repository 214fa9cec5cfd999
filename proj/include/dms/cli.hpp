#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dms/catalog.hpp"

namespace dms::cli {

inline const std::vector<std::string> kKinds = {"norm", "adtest", "dims", "trace", "ext", "psido", "czo",
                                                "wavelet-check"};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
};

struct Diagnostic {
  enum Level { error, warning } level = error;
  std::string message;
};

// Never mutates the spec.
std::vector<Diagnostic> validate(const std::string& kind, const json& spec);

struct Outcome {
  int exit_code = 0;  // 0 done, 2 done with precondition warnings, 1 error
  json report;
  std::map<std::string, Table> tables;  // written as <name>.csv
  std::vector<std::string> warnings;
};

Outcome run(const std::string& kind, const json& spec, const std::optional<std::string>& window_override = {});

void write_outputs(const Outcome& out, const std::string& dir);
std::string to_csv(const Table& t);

// Smallest wavelet order k with k > max(E* - n/2, F* - n/2).
int minimal_wavelet_order(const Thresholds& thr);

int main(int argc, char** argv);

}  // namespace dms::cli
