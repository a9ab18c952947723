#include "luna/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "json_util.hpp"
#include "luna/builtin.hpp"
#include "luna/calculator.hpp"
#include "luna/mock_server.hpp"
#include "luna/remote.hpp"

namespace luna::cli {

using nlohmann::json;

namespace {

// Input files that cannot be read or parsed.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad flags or inconsistent inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return lines;
}

bool looks_jsonl(const std::filesystem::path& path, const std::string& format,
                 const std::vector<std::string>& lines) {
  if (format == "jsonl") return true;
  if (format == "text") return false;
  if (path.extension() == ".jsonl") return true;
  for (const auto& l : lines) {
    const auto p = l.find_first_not_of(" \t");
    if (p != std::string::npos) return l[p] == '{';
  }
  return false;
}

struct Inputs {
  std::vector<std::string> candidates;
  std::optional<std::vector<std::string>> references;
};

Inputs read_candidates(const std::filesystem::path& path, const std::string& format) {
  const auto lines = read_lines(path);
  Inputs in;
  if (!looks_jsonl(path, format, lines)) {
    in.candidates = lines;
    return in;
  }
  std::vector<std::optional<std::string>> refs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const auto j = json::parse(lines[i], nullptr, false);
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (j.is_discarded() || !j.is_object()) throw IoError(where + ": not a JSON object");
    if (!j.contains("candidate") || !j["candidate"].is_string()) throw IoError(where + ": missing string 'candidate'");
    in.candidates.push_back(j["candidate"].get<std::string>());
    if (j.contains("reference") && !j["reference"].is_null()) {
      if (!j["reference"].is_string()) throw IoError(where + ": 'reference' must be a string");
      refs.push_back(j["reference"].get<std::string>());
    } else {
      refs.push_back(std::nullopt);
    }
  }
  const auto present = std::count_if(refs.begin(), refs.end(), [](const auto& r) { return r.has_value(); });
  if (present == 0) return in;
  if (static_cast<std::size_t>(present) != refs.size()) {
    throw UsageError(path.string() + ": some units have a reference and some do not");
  }
  in.references.emplace();
  for (auto& r : refs) in.references->push_back(std::move(*r));
  return in;
}

std::vector<std::string> read_references(const std::filesystem::path& path, const std::string& format) {
  const auto lines = read_lines(path);
  if (!looks_jsonl(path, format, lines)) return lines;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const auto j = json::parse(lines[i], nullptr, false);
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (j.is_string()) {
      out.push_back(j.get<std::string>());
    } else if (j.is_object() && j.contains("reference") && j["reference"].is_string()) {
      out.push_back(j["reference"].get<std::string>());
    } else {
      throw IoError(where + ": expected a string or an object with string 'reference'");
    }
  }
  return out;
}

struct MetricRequest {
  std::string name;
  ParamMap params;
};

struct RunConfig {
  std::vector<MetricRequest> metrics;
  std::string candidates;
  std::string references;
  std::string input_format = "auto";
  std::string out;
  std::string out_format = "json";
  bool parallel = false;
  std::size_t workers = 1;
  bool no_meta = false;
  std::vector<std::string> remote_files;
  ParamMap tokenizer;
};

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw IoError(path + ": config must be a JSON object");
  try {
    std::map<std::string, ParamMap> per_metric;
    if (j.contains("params")) {
      for (const auto& [name, p] : j["params"].items()) per_metric[name] = detail::params_from_json(p);
    }
    if (j.contains("metrics")) {
      rc.metrics.clear();
      for (const auto& m : j["metrics"]) {
        MetricRequest req;
        if (m.is_string()) {
          req.name = m.get<std::string>();
        } else {
          req.name = m.at("name").get<std::string>();
          if (m.contains("params")) req.params = detail::params_from_json(m["params"]);
        }
        rc.metrics.push_back(std::move(req));
      }
    }
    for (auto& req : rc.metrics) {
      if (auto it = per_metric.find(req.name); it != per_metric.end()) {
        for (const auto& [k, v] : it->second) req.params[k] = v;
      }
    }
    if (j.contains("candidates")) rc.candidates = j["candidates"].get<std::string>();
    if (j.contains("references")) rc.references = j["references"].get<std::string>();
    if (j.contains("input_format")) rc.input_format = j["input_format"].get<std::string>();
    if (j.contains("out")) rc.out = j["out"].get<std::string>();
    if (j.contains("out_format")) rc.out_format = j["out_format"].get<std::string>();
    if (j.contains("parallel")) rc.parallel = j["parallel"].get<bool>();
    if (j.contains("workers")) rc.workers = j["workers"].get<std::size_t>();
    if (j.contains("remote")) rc.remote_files.push_back(j["remote"].get<std::string>());
    if (j.contains("tokenizer")) {
      for (const auto& [k, v] : detail::params_from_json(j["tokenizer"])) rc.tokenizer[k] = v;
    }
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::pair<std::string, ParamValue> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + text + "'");
  return {text.substr(0, eq), infer_literal(text.substr(eq + 1))};
}

Registry build_registry(const std::vector<std::string>& remote_files) {
  Registry registry = default_registry();
  for (const auto& f : remote_files) {
    if (!std::filesystem::exists(f)) throw IoError("cannot read registration file '" + f + "'");
    for (auto& c : remote::load_registrations(f)) remote::register_remote_metric(registry, std::move(c));
  }
  return registry;
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_report(const RunConfig& rc, const CalculationResult& result, std::size_t units, std::ostream& os) {
  if (rc.out_format == "csv") {
    os << "index";
    std::vector<std::string> cols;
    for (const auto& k : result.keys) {
      if (result.per_metric.count(k)) cols.push_back(k);
    }
    for (const auto& k : cols) os << ',' << csv_field(k);
    os << '\n';
    for (std::size_t i = 0; i < units; ++i) {
      os << i;
      for (const auto& k : cols) os << ',' << format_real(result.per_metric.at(k)[i]);
      os << '\n';
    }
    return;
  }
  json metrics = json::object();
  for (const auto& [k, v] : result.per_metric) metrics[k] = v;
  json report = {{"schema", 1}, {"metrics", metrics}, {"warnings", result.warnings}};
  if (!rc.no_meta) {
    json timings = json::object();
    for (const auto& [k, t] : result.timings) timings[k] = std::chrono::duration<double, std::milli>(t).count();
    report["meta"] = {{"created", iso_now()}, {"units", units},     {"parallel", rc.parallel},
                      {"workers", rc.workers}, {"timings_ms", timings}, {"failed", result.failures}};
  }
  os << report.dump(2) << '\n';
}

int cmd_evaluate(RunConfig rc, const std::string& config_path, const std::vector<std::string>& param_flags,
                 const std::vector<std::string>& tokenizer_flags, std::ostream& out, std::ostream& err) {
  for (const auto& t : tokenizer_flags) {
    auto [k, v] = parse_assignment(t);
    rc.tokenizer[k] = v;
  }
  for (const auto& p : param_flags) {
    const auto dot = p.find('.');
    if (dot == std::string::npos || dot == 0) throw UsageError("--param expects metric.key=value, got '" + p + "'");
    const std::string metric = p.substr(0, dot);
    auto [k, v] = parse_assignment(p.substr(dot + 1));
    bool matched = false;
    for (auto& m : rc.metrics) {
      if (m.name == metric) {
        m.params[k] = v;
        matched = true;
      }
    }
    if (!matched) throw UsageError("--param names metric '" + metric + "' which was not requested");
  }
  if (!config_path.empty()) apply_config_file(rc, config_path);

  if (rc.metrics.empty()) throw UsageError("no metrics requested (use --metrics)");
  if (rc.candidates.empty()) throw UsageError("--candidates is required");
  if (rc.out_format != "json" && rc.out_format != "csv") throw UsageError("--out-format must be json or csv");
  if (rc.workers == 0) throw UsageError("--workers must be >= 1");

  const Registry registry = build_registry(rc.remote_files);
  for (const auto& m : rc.metrics) {
    if (!registry.contains(m.name)) throw UsageError("unknown metric '" + m.name + "' (see list-metrics)");
  }

  Inputs inputs = read_candidates(rc.candidates, rc.input_format);
  if (!rc.references.empty()) inputs.references = read_references(rc.references, rc.input_format);
  if (inputs.references && inputs.references->size() != inputs.candidates.size()) {
    throw UsageError(std::to_string(inputs.candidates.size()) + " candidates but " +
                     std::to_string(inputs.references->size()) + " references");
  }
  for (const auto& m : rc.metrics) {
    if (!inputs.references && registry.descriptor(m.name).requires_reference()) {
      throw MetricError(ErrorKind::MissingReference, m.name, "references are required (use --references)");
    }
  }

  std::vector<MetricPtr> instances;
  std::vector<std::string> init_failures;
  auto sink = std::make_shared<CollectingWarningSink>();
  for (const auto& m : rc.metrics) {
    ParamMap params = m.params;
    const auto& d = registry.descriptor(m.name);
    if (d.category != Category::Model && !d.params.count("remote")) {
      for (const auto& [k, v] : rc.tokenizer) params.try_emplace(k, v);
    }
    try {
      instances.push_back(registry.init_metric(m.name, params, sink));
    } catch (const MetricError& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      init_failures.push_back(m.name + " failed: " + e.what());
    }
  }

  CalculationResult result;
  if (!instances.empty()) {
    std::optional<std::span<const std::string>> refs;
    if (inputs.references) refs = std::span<const std::string>(*inputs.references);
    result = calculate(instances, inputs.candidates, refs, {rc.parallel, rc.workers});
  }
  for (auto& f : init_failures) {
    const auto name = f.substr(0, f.find(' '));
    result.failures[name] = f;
    result.warnings.push_back(std::move(f));
  }
  for (const auto& w : sink->messages()) result.warnings.push_back(w);

  if (rc.out.empty()) {
    write_report(rc, result, inputs.candidates.size(), out);
  } else {
    std::ofstream f(rc.out, std::ios::binary);
    if (!f) throw IoError("cannot write '" + rc.out + "'");
    write_report(rc, result, inputs.candidates.size(), f);
    if (!f) throw IoError("error writing '" + rc.out + "'");
  }
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  return result.failures.empty() ? kOk : kPartial;
}

int cmd_list(const std::vector<std::string>& remote_files, const std::string& format, std::ostream& out) {
  const auto registry = build_registry(remote_files);
  const auto entries = registry.list();
  if (format == "json") {
    json arr = json::array();
    for (const auto& d : entries) {
      arr.push_back({{"name", d.name},
                     {"category", to_string(d.category)},
                     {"reference_mode", to_string(d.reference_mode)},
                     {"granularity", to_string(d.granularity)},
                     {"params", detail::to_json(d.params)}});
    }
    out << arr.dump(2) << '\n';
    return kOk;
  }
  std::size_t w = 4;
  for (const auto& d : entries) w = std::max(w, d.name.size());
  out << std::left << std::setw(static_cast<int>(w) + 2) << "name" << std::setw(11) << "category"
      << std::setw(17) << "reference_mode" << "granularity\n";
  for (const auto& d : entries) {
    out << std::setw(static_cast<int>(w) + 2) << d.name << std::setw(11) << to_string(d.category) << std::setw(17)
        << to_string(d.reference_mode) << to_string(d.granularity) << '\n';
  }
  return kOk;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

int cmd_serve_mock(int port, const std::string& host, const std::string& profile, const std::string& name,
                   const std::vector<std::string>& params, std::ostream& out, std::ostream& err) {
  remote::MockOptions options;
  options.profile = remote::parse_mock_profile(profile);
  if (!name.empty()) options.name = name;
  for (const auto& p : params) {
    auto [k, v] = parse_assignment(p);
    options.params[k] = v;
  }
  remote::MockServer server(options);
  try {
    server.start(port, host);
  } catch (const MetricError& e) {
    err << "error: " << e.detail() << '\n';
    return kIo;
  }
  out << "listening on http://" << host << ':' << server.port() << " profile " << profile << std::endl;
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  return kOk;
}

}  // namespace

ParamValue infer_literal(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  const char* b = text.data();
  const char* e = b + text.size();
  std::int64_t i = 0;
  if (auto r = std::from_chars(b, e, i); r.ec == std::errc() && r.ptr == e && !text.empty()) return i;
  double d = 0.0;
  if (auto r = std::from_chars(b, e, d); r.ec == std::errc() && r.ptr == e && !text.empty()) return d;
  return text;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evaluation metrics for generated text"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string metrics_flag, config_path;
  std::vector<std::string> param_flags, tokenizer_flags;
  auto* eval = app.add_subcommand("evaluate", "Score candidates with one or more metrics");
  eval->add_option("--metrics", metrics_flag, "Comma-separated metric names");
  eval->add_option("--candidates", rc.candidates, "Candidates: JSONL or one text per line");
  eval->add_option("--references", rc.references, "References: JSONL or one text per line");
  eval->add_option("--input-format", rc.input_format, "auto, jsonl or text")
      ->check(CLI::IsMember({"auto", "jsonl", "text"}));
  eval->add_option("--out", rc.out, "Report path (default: stdout)");
  eval->add_option("--out-format", rc.out_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  eval->add_option("--param", param_flags, "metric.key=value");
  eval->add_option("--tokenizer", tokenizer_flags, "key=value applied to every native metric");
  eval->add_option("--config", config_path, "JSON run configuration; overrides flags");
  eval->add_flag("--parallel", rc.parallel, "Run metrics concurrently");
  eval->add_option("--workers", rc.workers, "Threads per metric batch");
  eval->add_flag("--no-meta", rc.no_meta, "Omit the meta block from the report");
  eval->add_option("--remote", rc.remote_files, "Remote metric registration file");

  std::vector<std::string> list_remote;
  std::string list_format = "table";
  auto* list = app.add_subcommand("list-metrics", "Show the metric registry");
  list->add_option("--format", list_format, "table or json")->check(CLI::IsMember({"table", "json"}));
  list->add_option("--remote", list_remote, "Remote metric registration file");

  int port = 8765;
  std::string host = "127.0.0.1", profile = "len_ratio", mock_name;
  std::vector<std::string> mock_params;
  auto* serve = app.add_subcommand("serve-mock", "Run the bundled mock endpoint");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--profile", profile, "len_ratio, echo_param, summaqa_corpus or item_hash");
  serve->add_option("--name", mock_name, "Metric name reported by /info");
  serve->add_option("--param", mock_params, "key=value default request parameter");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*eval) {
      for (auto& n : split(metrics_flag, ',')) rc.metrics.push_back({n, {}});
      return cmd_evaluate(std::move(rc), config_path, param_flags, tokenizer_flags, out, err);
    }
    if (*list) return cmd_list(list_remote, list_format, out);
    return cmd_serve_mock(port, host, profile, mock_name, mock_params, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const MetricError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace luna::cli
