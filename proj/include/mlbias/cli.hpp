#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mlbias::cli {

// Runs one command line (without the program name). Returns the process
// exit code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Recipe files: one statement per line, '#' comments.
//   set NAME VALUE
//   step NAME: COMMAND ARGS...
// "{NAME}" expands to a variable or to the output path of step NAME
// (<out_dir>/NAME); "{out}" is the current step's own output path.
struct RecipeStep {
  std::string name;
  std::vector<std::string> args;     // unexpanded
  std::vector<std::string> depends;  // step names referenced
  std::size_t line = 0;
};

struct Recipe {
  std::map<std::string, std::string> variables;
  std::vector<RecipeStep> steps;
};

Recipe parse_recipe(const std::string& text);
// Dependency order; ties follow recipe order. Throws DataError on a cycle
// or a reference to an unknown step or variable.
std::vector<std::size_t> execution_order(const Recipe& recipe);

struct StepOutcome {
  std::string name;
  std::vector<std::string> args;  // expanded
  std::string key;
  bool cache_hit = false;
  int exit_code = 0;
};

struct PipelineOptions {
  std::filesystem::path out_dir;
  std::map<std::string, std::string> overrides;
};

// Executes the recipe in-process. Steps whose content key (expanded command
// line plus the hashes of every existing file it names) is unchanged and
// whose recorded outputs are intact are skipped.
std::vector<StepOutcome> run_pipeline(const Recipe& recipe, const PipelineOptions& options, std::ostream& out,
                                      std::ostream& err);

}  // namespace mlbias::cli
