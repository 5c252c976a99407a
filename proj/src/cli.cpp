#include "decept/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decept/error.hpp"
#include "decept/harness.hpp"
#include "decept/schema.hpp"
#include "decept/serialize.hpp"

namespace decept::cli {

namespace fs = std::filesystem;
using numerics::format_double;
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

namespace {

struct Options {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_dir;

  double tol = 1e-4;
  std::size_t trained_steps = 100;

  harness::SyntheticSpec spec;
  harness::TrainConfig train;
  std::size_t seeds = 5;

  double threshold = 0.95;
  bool strict = false;
  std::string ratio;
  std::string input_path;
};

// ---------------------------------------------------------------------------
// Flat key = value config files

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](const std::string& s) {
      std::size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      std::size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ContractError("config line " + std::to_string(line_no) +
                          ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ContractError("config line " + std::to_string(line_no) +
                          ": empty key");
    kv[key] = value;
  }
  return kv;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "': not a number: '" + v + "'");
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ContractError("config key '" + key +
                        "': not a non-negative integer: '" + v + "'");
  return std::stoull(v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ContractError("config key '" + key + "': not a boolean: '" + v + "'");
}

void apply_config(Options& opt, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "seed") opt.seed = parse_unsigned(key, value);
    else if (key == "tol") opt.tol = parse_double(key, value);
    else if (key == "trained_steps") opt.trained_steps = parse_unsigned(key, value);
    else if (key == "n") opt.spec.n_samples = parse_unsigned(key, value);
    else if (key == "d_v") opt.spec.d_v = parse_unsigned(key, value);
    else if (key == "d_a") opt.spec.d_a = parse_unsigned(key, value);
    else if (key == "l_v") opt.spec.l_v = parse_unsigned(key, value);
    else if (key == "l_a") opt.spec.l_a = parse_unsigned(key, value);
    else if (key == "snr_v") opt.spec.snr_v = parse_double(key, value);
    else if (key == "snr_a") opt.spec.snr_a = parse_double(key, value);
    else if (key == "spike_frac") opt.spec.spike_frac = parse_double(key, value);
    else if (key == "spike_gain") opt.spec.spike_gain = parse_double(key, value);
    else if (key == "balance") opt.spec.class_balance = parse_double(key, value);
    else if (key == "lr") opt.train.lr = parse_double(key, value);
    else if (key == "epochs") opt.train.epochs = parse_unsigned(key, value);
    else if (key == "steps") opt.train.steps = parse_unsigned(key, value);
    else if (key == "batch") opt.train.batch_size = parse_unsigned(key, value);
    else if (key == "alpha") opt.train.alpha = parse_double(key, value);
    else if (key == "lambda") opt.train.lambda = parse_double(key, value);
    else if (key == "weight_decay") opt.train.weight_decay = parse_double(key, value);
    else if (key == "latent") opt.train.latent = parse_unsigned(key, value);
    else if (key == "hidden") opt.train.sics_hidden = parse_unsigned(key, value);
    else if (key == "residual_penalty")
      opt.train.residual_penalty = parse_double(key, value);
    else if (key == "sics") opt.train.use_sics = parse_bool(key, value);
    else if (key == "dmc") opt.train.use_dmc = parse_bool(key, value);
    else if (key == "seeds") opt.seeds = parse_unsigned(key, value);
    else if (key == "threshold") opt.threshold = parse_double(key, value);
    else if (key == "strict") opt.strict = parse_bool(key, value);
    else if (key == "ratio") opt.ratio = value;
    else
      throw ContractError("unknown config key '" + key + "'");
  }
}

// ---------------------------------------------------------------------------
// Resolved-config echo

void echo_common(const Options& opt, ConfigEcho& e) {
  e.emplace_back("seed", std::to_string(opt.seed));
}

void echo_synth(const Options& opt, ConfigEcho& e) {
  e.emplace_back("n", std::to_string(opt.spec.n_samples));
  e.emplace_back("d_v", std::to_string(opt.spec.d_v));
  e.emplace_back("d_a", std::to_string(opt.spec.d_a));
  e.emplace_back("l_v", std::to_string(opt.spec.l_v));
  e.emplace_back("l_a", std::to_string(opt.spec.l_a));
  e.emplace_back("snr_v", format_double(opt.spec.snr_v));
  e.emplace_back("snr_a", format_double(opt.spec.snr_a));
  e.emplace_back("spike_frac", format_double(opt.spec.spike_frac));
  e.emplace_back("spike_gain", format_double(opt.spec.spike_gain));
  e.emplace_back("balance", format_double(opt.spec.class_balance));
}

void echo_train(const Options& opt, ConfigEcho& e) {
  e.emplace_back("lr", format_double(opt.train.lr));
  e.emplace_back("epochs", std::to_string(opt.train.epochs));
  e.emplace_back("steps", std::to_string(opt.train.steps));
  e.emplace_back("batch", std::to_string(opt.train.batch_size));
  e.emplace_back("alpha", format_double(opt.train.alpha));
  e.emplace_back("lambda", format_double(opt.train.lambda));
  e.emplace_back("weight_decay", format_double(opt.train.weight_decay));
  e.emplace_back("latent", std::to_string(opt.train.latent));
  e.emplace_back("hidden", std::to_string(opt.train.sics_hidden));
  e.emplace_back("residual_penalty", format_double(opt.train.residual_penalty));
  e.emplace_back("sics", opt.train.use_sics ? "true" : "false");
  e.emplace_back("dmc", opt.train.use_dmc ? "true" : "false");
}

std::string config_text(const ConfigEcho& e) {
  std::string out;
  for (const auto& [k, v] : e) out += k + " = " + v + "\n";
  return out;
}

nlohmann::ordered_json config_json(const ConfigEcho& e) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : e) j[k] = v;
  return j;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

// Creates the output directory and proves it is writable by emitting the
// resolved config; called before any computation.
fs::path prepare_out_dir(const Options& opt, const ConfigEcho& echo) {
  if (opt.out_dir.empty())
    throw ContractError("this command requires --out <dir>");
  fs::path dir(opt.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + dir.string() + ": " +
                  ec.message());
  write_text_file(dir / "run.config", config_text(echo));
  return dir;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gradcheck(Options& opt) {
  harness::GradcheckSuiteReport suite =
      harness::gradcheck_suite(opt.seed, opt.trained_steps);
  bool ok = suite.pass(opt.tol);
  for (const harness::GradcheckCase& c : suite.cases) {
    std::cout << (c.report.max_rel_err <= opt.tol ? "pass" : "FAIL") << "  "
              << c.name << "  max_rel_err=" << format_double(c.report.max_rel_err)
              << "  worst=" << c.report.worst_param << "["
              << c.report.worst_index << "]\n";
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED")
            << " (tol=" << format_double(opt.tol)
            << ", worst=" << format_double(suite.worst) << " at "
            << suite.worst_case << "/" << suite.worst_param << ")\n";
  return ok ? 0 : 1;
}

void write_trace_artifact(const fs::path& path, const ConfigEcho& echo,
                          const harness::TrainTrace& trace) {
  std::ostringstream body;
  for (const auto& [k, v] : echo) body << "# " << k << " = " << v << "\n";
  harness::write_trace_csv(body, trace);
  write_text_file(path, body.str());
}

nlohmann::ordered_json metrics_json(const harness::Metrics& m) {
  return {{"accuracy", m.accuracy}, {"f1", m.f1}, {"tp", m.tp},
          {"fp", m.fp},             {"tn", m.tn}, {"fn", m.fn}};
}

int cmd_train(Options& opt) {
  opt.spec.seed = opt.seed;
  opt.train.seed = opt.seed;
  opt.train.validate();
  opt.spec.validate();
  ConfigEcho echo;
  echo_common(opt, echo);
  echo_synth(opt, echo);
  echo_train(opt, echo);
  fs::path dir = prepare_out_dir(opt, echo);

  harness::Dataset data = harness::gen_synthetic(opt.spec);
  harness::Model model =
      harness::Model::init(opt.train, opt.spec.d_v, opt.spec.d_a);
  harness::Trainer trainer(model, opt.train);
  harness::TrainTrace trace = trainer.run(data);
  harness::Metrics final_train = harness::evaluate(model, data);

  write_trace_artifact(dir / "trace.csv", echo, trace);

  nlohmann::ordered_json ckpt;
  ckpt["config"] = config_json(echo);
  ckpt["params"] = numerics::params_to_json(model.named());
  write_text_file(dir / "checkpoint.json", ckpt.dump(2) + "\n");

  nlohmann::ordered_json summary;
  summary["config"] = config_json(echo);
  summary["steps"] = trace.steps.size();
  summary["final_train"] = metrics_json(final_train);
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");

  std::cout << "trained " << trace.steps.size() << " steps; train accuracy "
            << format_double(final_train.accuracy) << ", f1 "
            << format_double(final_train.f1) << "\n";
  return 0;
}

int cmd_ablate(Options& opt) {
  if (opt.seeds == 0) throw ContractError("--seeds must be positive");
  opt.spec.seed = opt.seed;
  opt.train.seed = opt.seed;
  opt.train.validate();
  opt.spec.validate();
  ConfigEcho echo;
  echo_common(opt, echo);
  echo_synth(opt, echo);
  echo_train(opt, echo);
  echo.emplace_back("seeds", std::to_string(opt.seeds));
  fs::path dir = prepare_out_dir(opt, echo);

  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < opt.seeds; ++i) seeds.push_back(opt.seed + i);
  harness::ExperimentReport report =
      harness::run_experiment(opt.spec, opt.train, seeds);

  nlohmann::ordered_json comparison;
  comparison["config"] = config_json(echo);
  comparison["variants"] = harness::comparison_json(report);
  write_text_file(dir / "comparison.json", comparison.dump(2) + "\n");

  for (const harness::VariantRun& run : report.runs) {
    std::string variant = run.variant;
    std::erase(variant, '+');
    write_trace_artifact(dir / ("trace_" + variant + "_seed" +
                                std::to_string(run.seed) + ".csv"),
                         echo, run.trace);
  }

  std::cout << "ablation complete: " << report.runs.size() << " runs over "
            << opt.seeds << " seeds\n";
  return 0;
}

int cmd_reports_validate(Options& opt) {
  std::vector<schema::Record> records = schema::load_records(opt.input_path);
  ConfigEcho echo;
  echo_common(opt, echo);
  echo.emplace_back("strict", opt.strict ? "true" : "false");

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::size_t bad = 0;
  for (const schema::Record& rec : records) {
    schema::ParseResult res = schema::parse_report(rec.line);
    nlohmann::ordered_json row;
    row["id"] = rec.id;
    if (std::holds_alternative<schema::AuditReport>(res)) {
      row["ok"] = true;
    } else {
      const auto& issue = std::get<schema::ParseIssue>(res);
      row["ok"] = false;
      row["error"] = issue.message;
      std::cout << "record " << rec.id << ": " << issue.message << "\n";
      ++bad;
    }
    rows.push_back(std::move(row));
  }
  std::cout << records.size() - bad << "/" << records.size()
            << " records valid\n";

  nlohmann::ordered_json out;
  out["config"] = config_json(echo);
  out["records"] = std::move(rows);
  out["counts"] = {{"total", records.size()},
                   {"valid", records.size() - bad},
                   {"invalid", bad}};
  if (!opt.out_dir.empty()) {
    fs::path dir(opt.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    write_text_file(dir / "validate.json", out.dump(2) + "\n");
  }
  return opt.strict && bad ? 1 : 0;
}

int cmd_reports_filter(Options& opt) {
  std::vector<schema::Record> records = schema::load_records(opt.input_path);
  ConfigEcho echo;
  echo_common(opt, echo);
  echo.emplace_back("threshold", format_double(opt.threshold));

  schema::FilterReport report =
      schema::filter_records(records, opt.threshold);
  nlohmann::ordered_json out;
  out["config"] = config_json(echo);
  nlohmann::ordered_json body = schema::to_json(report);
  for (auto& [k, v] : body.items()) out[k] = v;

  std::cout << "kept " << report.kept.size() << " of " << records.size()
            << " (" << report.format_drops << " format, "
            << report.duplicate_drops << " duplicate drops)\n";
  if (!opt.out_dir.empty()) {
    fs::path dir(opt.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    write_text_file(dir / "filter.json", out.dump(2) + "\n");
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_reports_stats(Options& opt) {
  std::vector<schema::Record> records = schema::load_records(opt.input_path);
  ConfigEcho echo;
  echo_common(opt, echo);

  std::vector<schema::AuditReport> parsed;
  std::vector<schema::AuditTags> tags;
  for (const schema::Record& rec : records) {
    schema::ParseResult res = schema::parse_report(rec.line);
    if (std::holds_alternative<schema::AuditReport>(res))
      parsed.push_back(std::get<schema::AuditReport>(res));
    if (rec.tags) tags.push_back(*rec.tags);
  }

  nlohmann::ordered_json out;
  out["config"] = config_json(echo);
  out["length"] = schema::to_json(schema::length_stats(parsed));
  out["taxonomy"] = schema::to_json(schema::audit_stats(tags));

  std::cout << out.dump(2) << "\n";
  if (!opt.out_dir.empty()) {
    fs::path dir(opt.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    write_text_file(dir / "stats.json", out.dump(2) + "\n");
  }
  return 0;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> parse_ratio(
    const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
    throw ContractError("--ratio must look like 2:1");
  auto num = [&](std::string part) {
    if (part.find_first_not_of("0123456789") != std::string::npos || part.empty())
      throw ContractError("--ratio must look like 2:1");
    return static_cast<std::uint64_t>(std::stoull(part));
  };
  std::uint64_t p = num(s.substr(0, colon));
  std::uint64_t q = num(s.substr(colon + 1));
  if (p == 0 || q == 0) throw ContractError("--ratio parts must be positive");
  return std::make_pair(p, q);
}

int cmd_manifest(Options& opt) {
  std::vector<schema::ManifestEntry> entries =
      schema::load_manifest_csv(opt.input_path);
  schema::ManifestCheck check =
      schema::validate_manifest(entries, parse_ratio(opt.ratio));
  if (check.empty) {
    std::cout << "warning: manifest has no data rows\n";
    return 0;
  }
  for (const schema::ManifestEntry& e : entries)
    std::cout << e.edition << ": total " << e.total << ", deceptive "
              << e.deceptive << ", truthful " << e.truthful << "\n";
  std::cout << "grand totals: " << check.grand_total << " samples, "
            << check.grand_deceptive << " deceptive, " << check.grand_truthful
            << " truthful\n";
  if (!check.pass) {
    for (const std::string& v : check.violations)
      std::cout << "violation: " << v << "\n";
    return 1;
  }
  std::cout << "manifest consistent\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  Options opt;

  // The config file seeds option defaults, so it is located and applied
  // before CLI11 parses; explicit flags then take precedence.
  try {
    for (int i = 1; i < argc; ++i) {
      std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc)
        opt.config_path = argv[i + 1];
      else if (arg.rfind("--config=", 0) == 0)
        opt.config_path = arg.substr(9);
    }
    if (!opt.config_path.empty())
      apply_config(opt, read_config_file(opt.config_path));
  } catch (const decept::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"desk-scale multimodal deception-analysis toolkit"};
  app.require_subcommand(1);
  app.add_option("--seed", opt.seed, "run seed");
  app.add_option("--config", opt.config_path,
                 "flat key = value config file (flags take precedence)");
  app.add_option("--out", opt.out_dir, "output directory for artifacts");

  auto add_synth_opts = [&](CLI::App* c) {
    c->add_option("--n", opt.spec.n_samples, "sample count");
    c->add_option("--d-v", opt.spec.d_v, "video feature width");
    c->add_option("--d-a", opt.spec.d_a, "audio feature width");
    c->add_option("--l-v", opt.spec.l_v, "video sequence length");
    c->add_option("--l-a", opt.spec.l_a, "audio sequence length");
    c->add_option("--snr-v", opt.spec.snr_v, "video signal-to-noise ratio");
    c->add_option("--snr-a", opt.spec.snr_a, "audio signal-to-noise ratio");
    c->add_option("--spike-frac", opt.spec.spike_frac,
                  "fraction of dimensions carrying amplified noise");
    c->add_option("--spike-gain", opt.spec.spike_gain,
                  "noise amplification on spiked dimensions");
    c->add_option("--balance", opt.spec.class_balance,
                  "fraction labeled deceptive");
  };
  auto add_train_opts = [&](CLI::App* c) {
    c->add_option("--lr", opt.train.lr, "learning rate");
    c->add_option("--epochs", opt.train.epochs, "epoch count");
    c->add_option("--steps", opt.train.steps,
                  "optimizer-step cap (0: derive from epochs)");
    c->add_option("--batch", opt.train.batch_size, "batch size");
    c->add_option("--alpha", opt.train.alpha, "distillation loss weight");
    c->add_option("--lambda", opt.train.lambda, "refinement blend weight");
    c->add_option("--weight-decay", opt.train.weight_decay, "decoupled decay");
    c->add_option("--latent", opt.train.latent, "projector latent width");
    c->add_option("--hidden", opt.train.sics_hidden,
                  "refiner hidden width (0: same as feature width)");
    c->add_option("--residual-penalty", opt.train.residual_penalty,
                  "L2 pressure on the refiner residual");
    c->add_flag("--sics,!--no-sics", opt.train.use_sics,
                "enable the refinement adapters");
    c->add_flag("--dmc,!--no-dmc", opt.train.use_dmc,
                "enable the distillation regularizer");
  };

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "certify analytic gradients against central differences");
  gc->add_option("--tol", opt.tol, "max relative error tolerated");
  gc->add_option("--trained-steps", opt.trained_steps,
                 "re-certify after this many training steps");

  CLI::App* tr =
      app.add_subcommand("train", "train on synthetic data, write artifacts");
  add_synth_opts(tr);
  add_train_opts(tr);

  CLI::App* ab = app.add_subcommand(
      "ablate", "train the four enable/disable variants across seeds");
  add_synth_opts(ab);
  add_train_opts(ab);
  ab->add_option("--seeds", opt.seeds, "number of consecutive seeds");

  CLI::App* rp = app.add_subcommand("reports", "audit-record toolkit");
  rp->require_subcommand(1);
  CLI::App* rv = rp->add_subcommand("validate", "schema-check records");
  rv->add_option("file", opt.input_path, "record file (text or JSONL)")
      ->required();
  rv->add_flag("--strict", opt.strict, "nonzero exit if any record fails");
  CLI::App* rf =
      rp->add_subcommand("filter", "schema-check, then drop near-duplicates");
  rf->add_option("file", opt.input_path, "record file (text or JSONL)")
      ->required();
  rf->add_option("--threshold", opt.threshold, "duplicate similarity cutoff");
  CLI::App* rs = rp->add_subcommand("stats", "length and taxonomy statistics");
  rs->add_option("file", opt.input_path, "record file (text or JSONL)")
      ->required();

  CLI::App* mf =
      app.add_subcommand("manifest", "consistency-check a dataset manifest");
  mf->add_option("file", opt.input_path, "manifest CSV")->required();
  mf->add_option("--ratio", opt.ratio,
                 "expected deceptive:truthful ratio, e.g. 2:1");

  for (CLI::App* sub : {gc, tr, ab, rp, rv, rf, rs, mf})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gc->parsed()) return cmd_gradcheck(opt);
    if (tr->parsed()) return cmd_train(opt);
    if (ab->parsed()) return cmd_ablate(opt);
    if (rp->parsed()) {
      if (rv->parsed()) return cmd_reports_validate(opt);
      if (rf->parsed()) return cmd_reports_filter(opt);
      if (rs->parsed()) return cmd_reports_stats(opt);
    }
    if (mf->parsed()) return cmd_manifest(opt);
    std::cerr << "error: no command\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const decept::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace decept::cli
