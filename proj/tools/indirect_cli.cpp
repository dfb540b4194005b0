// Command-line front end: fit, transform, evaluate, run, sweep, report, prompts.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/experiment.hpp"
#include "indirect/model_file.hpp"
#include "indirect/report.hpp"

namespace {

using namespace indirect;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

// Raw flag values; only flags the user passed override the config file.
struct ExperimentFlags {
  std::string config;
  std::string method;
  std::string text_emb;
  std::string img_emb;
  std::string labels;
  long dim = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> metrics;
  double lr = 0;
  long patience = 0;
  long max_iterations = 0;
  long prompt_sample = 0;
  unsigned threads = 0;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config; flags override its fields")->check(CLI::ExistingFile);
  cmd->add_option("--method", f.method,
                  "indirect, pca, lae, ae, random-transform, random-embedding, clip-passthrough or oracle");
  cmd->add_option("--text-emb", f.text_emb, "prompt embedding file");
  cmd->add_option("--img-emb", f.img_emb, "image embedding file");
  cmd->add_option("--labels", f.labels, "id<TAB>label file");
  cmd->add_option("--dim", f.dim, "target dimension r'");
  cmd->add_option("--seeds", f.seeds, "comma-separated seeds")->delimiter(',');
  cmd->add_option("--metrics", f.metrics, "comma-separated metrics (map_at_r, prec_at_1, r_prec, map, mrr, ami, nmi)")
      ->delimiter(',');
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--patience", f.patience, "early-stopping patience in iterations");
  cmd->add_option("--max-iterations", f.max_iterations, "iteration cap");
  cmd->add_option("--prompt-sample", f.prompt_sample, "fit on a random subset of this many prompts per seed");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

ExperimentConfig build_config(const CLI::App* cmd, const ExperimentFlags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) c = read_config_file(f.config);
  const auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--method")) c.method = method_from_string(f.method);
  if (given("--text-emb")) c.text_embeddings = f.text_emb;
  if (given("--img-emb")) c.image_embeddings = f.img_emb;
  if (given("--labels")) c.labels = f.labels;
  if (given("--dim")) c.target_dim = f.dim;
  if (given("--seeds")) c.seeds = f.seeds;
  if (given("--metrics")) {
    c.metrics.clear();
    for (const auto& m : f.metrics) c.metrics.push_back(metric_from_string(m));
  }
  if (given("--lr")) c.lr = f.lr;
  if (given("--patience")) c.patience = f.patience;
  if (given("--max-iterations")) c.max_iterations = f.max_iterations;
  if (given("--prompt-sample")) c.prompt_sample = f.prompt_sample;
  if (given("--threads")) c.threads = f.threads;
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string sweep_line(const SweepPoint& p) {
  std::string line = std::to_string(p.value);
  if (!p.report) return line + "  skipped: " + p.error;
  for (const auto& [m, s] : p.report->metrics) line += std::string("  ") + metric_display_name(m) + " " + format_percent(s);
  return line;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Notion-specific projections of hypersphere embeddings"};
  app.require_subcommand(1);

  ExperimentFlags fit_flags;
  std::string fit_out;
  std::optional<std::uint64_t> fit_seed;
  auto* fit = app.add_subcommand("fit", "fit a projection and write it as a model file");
  add_experiment_flags(fit, fit_flags);
  fit->add_option("--seed", fit_seed, "seed for this fit (default: first of --seeds)");
  fit->add_option("--out", fit_out, "model file to write")->required();

  std::string tr_model, tr_img, tr_out;
  auto* transform = app.add_subcommand("transform", "apply a model file to image embeddings");
  transform->add_option("--model", tr_model, "model file from fit")->required();
  transform->add_option("--img-emb", tr_img, "image embedding file")->required();
  transform->add_option("--out", tr_out, "embedding file to write")->required();

  std::string ev_emb, ev_labels, ev_out, ev_name = "evaluated";
  std::vector<std::string> ev_metrics;
  std::vector<std::uint64_t> ev_seeds = {0};
  unsigned ev_threads = 0;
  auto* evaluate = app.add_subcommand("evaluate", "score an embedding file against labels");
  evaluate->add_option("--img-emb", ev_emb, "embedding file to score")->required();
  evaluate->add_option("--labels", ev_labels, "id<TAB>label file")->required();
  evaluate->add_option("--metrics", ev_metrics, "comma-separated metrics")->delimiter(',');
  evaluate->add_option("--seeds", ev_seeds, "k-means seeds for the clustering metrics")->delimiter(',');
  evaluate->add_option("--method", ev_name, "name recorded in the report");
  evaluate->add_option("--threads", ev_threads, "worker threads (0 = all cores)");
  evaluate->add_option("--out", ev_out, "report JSON to write");

  ExperimentFlags run_flags;
  std::string run_out;
  auto* run = app.add_subcommand("run", "fit, transform and evaluate for every seed");
  add_experiment_flags(run, run_flags);
  run->add_option("--out", run_out, "report JSON to write");

  ExperimentFlags sweep_flags;
  std::vector<long> sweep_dims, sweep_prompts;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "one run per target dimension or prompt-sample size");
  add_experiment_flags(sweep, sweep_flags);
  auto* dims_opt = sweep->add_option("--sweep-dims", sweep_dims, "comma-separated target dimensions")->delimiter(',');
  auto* prompts_opt =
      sweep->add_option("--sweep-prompts", sweep_prompts, "comma-separated prompt-sample sizes")->delimiter(',');
  dims_opt->excludes(prompts_opt);
  sweep->add_option("--out", sweep_out, "sweep JSON to write");

  std::vector<std::string> report_files;
  std::string report_out;
  auto* report = app.add_subcommand("report", "render report files as a percent table");
  report->add_option("reports", report_files, "report JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "text file to write instead of stdout");

  std::string manifest, prompts_out;
  auto* prompts = app.add_subcommand("prompts", "expand a prompt manifest into one prompt per line");
  prompts->add_option("--manifest", manifest, "manifest JSON")->required();
  prompts->add_option("--out", prompts_out, "text file to write instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (fit->parsed()) {
    const ExperimentConfig c = build_config(fit, fit_flags);
    const auto data = load_experiment_data(c);
    const std::uint64_t seed = fit_seed.value_or(c.seeds.front());
    const auto model = fit_model(c, data, seed);
    write_model_file(model, fit_out);
    std::cout << to_string(model.method) << " seed " << seed << ": loss " << model.final_loss << " after "
              << model.iterations << " iterations -> " << fit_out << '\n';
  } else if (transform->parsed()) {
    const auto model = read_model_file(tr_model);
    const auto out = apply_model(model, read_embeddings_file(resolve_data_path(tr_img)));
    write_embeddings_file(out, tr_out);
    std::cout << out.count() << " x " << out.dim() << " -> " << tr_out << '\n';
  } else if (evaluate->parsed()) {
    std::vector<Metric> metrics(kAllMetrics.begin(), kAllMetrics.end());
    if (!ev_metrics.empty()) {
      metrics.clear();
      for (const auto& m : ev_metrics) metrics.push_back(metric_from_string(m));
    }
    if (ev_seeds.empty()) throw ConfigError("at least one seed is required");
    const auto e = read_embeddings_file(resolve_data_path(ev_emb));
    const auto classes = encode_labels(align_labels(e, read_labels_file(resolve_data_path(ev_labels))));
    std::vector<SeedResult> per_seed;
    for (auto s : ev_seeds) per_seed.push_back(evaluate_embeddings(e, classes, metrics, s, ev_threads));
    ExperimentConfig c;
    c.image_embeddings = ev_emb;
    c.labels = ev_labels;
    c.seeds = ev_seeds;
    c.metrics = metrics;
    RetrievalReport r = aggregate(c, per_seed);
    r.method = ev_name;
    r.config = {{"embeddings", ev_emb}, {"labels", ev_labels}, {"seeds", ev_seeds}, {"metrics", to_json(c)["metrics"]}};
    r.fingerprint = config_fingerprint(r.config);
    if (!ev_out.empty()) write_text(ev_out, to_json(r).dump(2) + "\n");
    std::cout << render_table({r});
  } else if (run->parsed()) {
    const ExperimentConfig c = build_config(run, run_flags);
    const auto r = run_experiment(c);
    if (!run_out.empty()) write_text(run_out, to_json(r).dump(2) + "\n");
    std::cout << render_table({r});
    if (r.skipped_queries > 0) std::cout << r.skipped_queries << " singleton queries skipped\n";
  } else if (sweep->parsed()) {
    ExperimentConfig c = build_config(sweep, sweep_flags);
    SweepAxis axis = SweepAxis::kTargetDim;
    std::vector<long> values;
    if (!sweep_dims.empty()) values = sweep_dims;
    else if (!sweep_prompts.empty()) axis = SweepAxis::kPromptCount, values = sweep_prompts;
    else if (!c.sweep_dims.empty()) values = c.sweep_dims;
    else if (!c.sweep_prompt_counts.empty()) axis = SweepAxis::kPromptCount, values = c.sweep_prompt_counts;
    else throw ConfigError("sweep needs --sweep-dims or --sweep-prompts");
    const auto points = run_sweep(c, axis, values);
    nlohmann::json j = {{"axis", axis == SweepAxis::kTargetDim ? "target_dim" : "prompt_sample"},
                        {"config", to_json(c)},
                        {"points", nlohmann::json::array()}};
    for (const auto& p : points) j["points"].push_back(to_json(p));
    if (!sweep_out.empty()) write_text(sweep_out, j.dump(2) + "\n");
    std::cout << j["axis"].get<std::string>() << '\n';
    for (const auto& p : points) std::cout << sweep_line(p) << '\n';
  } else if (report->parsed()) {
    std::vector<RetrievalReport> reports;
    for (const auto& f : report_files) reports.push_back(report_from_json(read_json(f)));
    const std::string table = render_table(reports);
    if (report_out.empty()) std::cout << table;
    else write_text(report_out, table);
  } else if (prompts->parsed()) {
    std::string text;
    for (const auto& p : render_prompts(read_manifest_file(resolve_data_path(manifest)))) text += p + "\n";
    if (prompts_out.empty()) std::cout << text;
    else write_text(prompts_out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
