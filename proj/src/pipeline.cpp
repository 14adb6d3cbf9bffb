#include <algorithm>
#include <chrono>
#include <filesystem>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlbias/cli.hpp"
#include "mlbias/error.hpp"
#include "mlbias/hash.hpp"
#include "mlbias/report.hpp"
#include "mlbias/text.hpp"

namespace mlbias::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::string> split_args(const std::string& s, std::size_t line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  bool have = false;
  for (char c : s) {
    if (c == '"') {
      quoted = !quoted;
      have = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (have) out.push_back(cur);
      cur.clear();
      have = false;
    } else {
      cur.push_back(c);
      have = true;
    }
  }
  if (quoted) throw DataError("recipe line " + std::to_string(line) + ": unterminated quote");
  if (have) out.push_back(cur);
  return out;
}

// Names inside {...} of one argument.
std::vector<std::string> references(const std::string& arg, std::size_t line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = arg.find('{', pos)) != std::string::npos) {
    const auto end = arg.find('}', pos);
    if (end == std::string::npos) throw DataError("recipe line " + std::to_string(line) + ": unclosed '{'");
    out.push_back(arg.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

std::string expand(const std::string& arg, const std::map<std::string, std::string>& vars,
                   const fs::path& out_dir, const std::string& self) {
  std::string result;
  std::size_t pos = 0;
  while (true) {
    const auto open = arg.find('{', pos);
    if (open == std::string::npos) {
      result += arg.substr(pos);
      break;
    }
    const auto close = arg.find('}', open);
    result += arg.substr(pos, open - pos);
    const std::string name = arg.substr(open + 1, close - open - 1);
    if (name == "out") {
      result += (out_dir / self).string();
    } else if (auto it = vars.find(name); it != vars.end()) {
      result += it->second;
    } else {
      result += (out_dir / name).string();
    }
    pos = close + 1;
  }
  return result;
}

std::vector<fs::path> step_outputs(const fs::path& out_dir, const std::string& name) {
  std::vector<fs::path> out;
  if (!fs::exists(out_dir)) return out;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string f = entry.path().filename().string();
    if (f == name || f.rfind(name + ".", 0) == 0) {
      if (f.ends_with(".manifest.json")) continue;
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Recipe parse_recipe(const std::string& text) {
  Recipe r;
  std::set<std::string> names;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s{text::trim(raw)};
    if (s.empty() || s[0] == '#') continue;
    const auto where = "recipe line " + std::to_string(line) + ": ";
    if (s.rfind("set ", 0) == 0) {
      const std::string rest{text::trim(s.substr(4))};
      const auto sp = rest.find_first_of(" \t");
      const std::string name = rest.substr(0, sp);
      if (!valid_name(name) || name == "out") throw DataError(where + "bad variable name '" + name + "'");
      r.variables[name] = sp == std::string::npos ? std::string() : std::string(text::trim(rest.substr(sp)));
    } else if (s.rfind("step ", 0) == 0) {
      const auto colon = s.find(':');
      if (colon == std::string::npos) throw DataError(where + "expected 'step NAME: COMMAND ...'");
      RecipeStep step;
      step.name = std::string(text::trim(s.substr(5, colon - 5)));
      step.line = line;
      if (!valid_name(step.name) || step.name == "out") throw DataError(where + "bad step name '" + step.name + "'");
      if (!names.insert(step.name).second) throw DataError(where + "duplicate step '" + step.name + "'");
      step.args = split_args(s.substr(colon + 1), line);
      if (step.args.empty()) throw DataError(where + "step has no command");
      if (step.args.front() == "pipeline") throw DataError(where + "recipes cannot nest pipelines");
      r.steps.push_back(std::move(step));
    } else {
      throw DataError(where + "expected 'set' or 'step'");
    }
  }
  for (auto& step : r.steps) {
    std::set<std::string> seen;
    for (const auto& a : step.args) {
      for (const auto& ref : references(a, step.line)) {
        if (ref == "out" || r.variables.count(ref)) continue;
        if (names.count(ref) && seen.insert(ref).second) step.depends.push_back(ref);
      }
    }
  }
  return r;
}

std::vector<std::size_t> execution_order(const Recipe& recipe) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < recipe.steps.size(); ++i) index[recipe.steps[i].name] = i;
  for (const auto& [name, _] : recipe.variables) {
    if (index.count(name)) throw DataError("recipe: '" + name + "' is both a variable and a step");
  }
  std::vector<std::vector<std::size_t>> deps(recipe.steps.size());
  for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
    const auto& step = recipe.steps[i];
    for (const auto& a : step.args) {
      for (const auto& ref : references(a, step.line)) {
        if (ref == "out" || recipe.variables.count(ref)) continue;
        auto it = index.find(ref);
        if (it == index.end()) {
          throw DataError("recipe line " + std::to_string(step.line) + ": unknown variable or step '" + ref + "'");
        }
        if (it->second == i) throw DataError("recipe: step '" + step.name + "' depends on itself");
        deps[i].push_back(it->second);
      }
    }
  }
  std::vector<std::size_t> order;
  std::vector<bool> done(recipe.steps.size(), false);
  while (order.size() < recipe.steps.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
      if (done[i]) continue;
      if (std::all_of(deps[i].begin(), deps[i].end(), [&](std::size_t d) { return done[d]; })) {
        done[i] = true;
        order.push_back(i);
        progressed = true;
        break;
      }
    }
    if (!progressed) {
      std::string cyc;
      for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
        if (!done[i]) cyc += (cyc.empty() ? "" : ", ") + recipe.steps[i].name;
      }
      throw DataError("recipe: dependency cycle among steps " + cyc);
    }
  }
  return order;
}

std::vector<StepOutcome> run_pipeline(const Recipe& recipe, const PipelineOptions& options, std::ostream& out,
                                      std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  auto vars = recipe.variables;
  for (const auto& [k, v] : options.overrides) vars[k] = v;
  const auto order = execution_order(recipe);
  const fs::path cache = options.out_dir / ".cache";
  fs::create_directories(cache);

  std::vector<StepOutcome> outcomes;
  json steps = json::array();
  json timing = json::array();
  for (std::size_t idx : order) {
    const auto& step = recipe.steps[idx];
    StepOutcome o;
    o.name = step.name;
    for (const auto& a : step.args) o.args.push_back(expand(a, vars, options.out_dir, step.name));

    Sha256 h;
    for (const auto& a : o.args) {
      h.update(a);
      h.update(std::string(1, '\x1f'));
      std::error_code ec;
      const fs::path path(a);
      const std::string f = path.filename().string();
      const bool own = path.parent_path() == options.out_dir && (f == step.name || f.rfind(step.name + ".", 0) == 0);
      if (!own && fs::is_regular_file(path, ec)) h.update(sha256_file(path));
    }
    o.key = h.hex_digest();

    const fs::path key_file = cache / (step.name + ".key");
    const fs::path outputs_file = cache / (step.name + ".outputs");
    bool hit = false;
    std::error_code ec;
    if (fs::is_regular_file(key_file, ec) && fs::is_regular_file(outputs_file, ec) &&
        text::trim(text::read_file(key_file)) == o.key) {
      hit = true;
      for (const auto& row : text::read_table(outputs_file)) {
        if (row.fields.size() != 2 || !fs::is_regular_file(row.fields[1], ec) ||
            sha256_file(row.fields[1]) != row.fields[0]) {
          hit = false;
          break;
        }
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (!hit) {
      err << "[" << step.name << "] " << text::join(o.args, " ") << "\n";
      o.exit_code = run(o.args, out, err);
      if (o.exit_code != 0) {
        const std::string msg = "pipeline step '" + step.name + "' failed with exit code " + std::to_string(o.exit_code);
        if (o.exit_code == static_cast<int>(ExitCode::kUsage)) throw UsageError(msg);
        if (o.exit_code == static_cast<int>(ExitCode::kNumerical)) throw NumericalError(msg);
        throw DataError(msg);
      }
    } else {
      err << "[" << step.name << "] cached\n";
    }
    o.cache_hit = hit;

    json produced = json::object();
    std::string listing;
    for (const auto& p : step_outputs(options.out_dir, step.name)) {
      const auto digest = sha256_file(p);
      produced[p.filename().string()] = digest;
      listing += digest + "\t" + p.string() + "\n";
    }
    if (!hit) {
      text::write_file(outputs_file, listing);
      text::write_file(key_file, o.key + "\n");
    }
    steps.push_back({{"name", o.name}, {"args", o.args}, {"key", o.key}, {"outputs", produced}});
    timing.push_back({{"name", o.name},
                      {"cache_hit", hit},
                      {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
    outcomes.push_back(std::move(o));
  }

  json report{{"variables", vars}, {"steps", steps}, {"version", kToolkitVersion}};
  text::write_file(options.out_dir / "pipeline.json", report.dump(1) + "\n");
  json manifest{{"steps", timing},
                {"duration_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  text::write_file(options.out_dir / "pipeline.manifest.json", manifest.dump(1) + "\n");
  return outcomes;
}

}  // namespace mlbias::cli
