// garlic: command-line front end for building and querying GARLIC indexes.

#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "garlic/garlic.hpp"

namespace {

using namespace garlic;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed (overrides config)");
  cmd->add_flag("--deterministic", c.deterministic, "Single-threaded, timing-free outputs");
  cmd->add_option("--threads", c.threads, "Worker thread cap (0 = hardware)");
}

/// Effective configuration: file values, then command-line overrides.
RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw IoError("cannot open " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  if (c.seed) cfg.hp.seed = *c.seed;
  if (c.deterministic) cfg.deterministic = true;
  if (c.threads) cfg.threads = *c.threads;
  set_num_threads(cfg.deterministic ? 1 : cfg.threads);
  return cfg;
}

/// Command-line value, else the config's [run] entry, else an error.
std::string path_arg(const std::string& flag_value, const RunConfig& cfg, const std::string& key, bool required = true) {
  if (!flag_value.empty()) return flag_value;
  if (const auto it = cfg.paths.find(key); it != cfg.paths.end()) return it->second;
  if (required) throw ConfigError("missing --" + key + " (flag or [run] " + key + ")");
  return {};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

std::string fmt(double v) { return format_real(v); }

std::string sibling(const std::string& path, const std::string& ext) {
  return std::filesystem::path(path).replace_extension(ext).string();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  SynthOptions opt;
  std::size_t n_queries = 0;
  std::string out, labels, queries_out, query_labels;
};

void run_synth(SynthArgs& a) {
  const RunConfig cfg = resolve(a.common);
  a.opt.seed = a.common.seed.value_or(cfg.hp.seed);
  const std::string out = path_arg(a.out, cfg, "out");
  SynthOptions o = a.opt;
  o.n += a.n_queries;
  auto ds = synth_mixture(o);
  const std::string labels = a.labels.empty() ? sibling(out, ".labels") : a.labels;
  if (a.n_queries > 0) {
    auto [base, queries] = split_rows(ds, a.opt.n);
    save_fvecs(out, base.X);
    save_labels(labels, *base.labels);
    const std::string qout = a.queries_out.empty() ? sibling(out, ".queries.fvecs") : a.queries_out;
    save_fvecs(qout, queries.X);
    save_labels(a.query_labels.empty() ? sibling(qout, ".labels") : a.query_labels, *queries.labels);
  } else {
    save_fvecs(out, ds.X);
    save_labels(labels, *ds.labels);
  }
  std::cout << "synth n=" << a.opt.n << " queries=" << a.n_queries << " d=" << a.opt.d << " out=" << out << '\n';
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  Common common;
  std::string data, out, log, dump_config;
  std::deque<std::string> hp_values;
  std::vector<std::pair<std::string, CLI::Option*>> hp_options;
  bool quiet = false;
};

void add_hp_flags(CLI::App* cmd, BuildArgs& a) {
  HyperParams hp;
  HyperParams::visit(hp, [&](std::string_view name, const auto& v) {
    if (name == "seed") return;  // shared --seed
    std::string flag = "--" + std::string(name);
    std::string dashed = flag;
    std::replace(dashed.begin() + 2, dashed.end(), '_', '-');
    std::string names = flag;
    if (dashed != flag) names += "," + dashed;
    if (name == "epochs_max") names += ",--epochs";
    a.hp_values.emplace_back();
    auto* opt = cmd->add_option(names, a.hp_values.back(), "default " + detail::format_field(v));
    opt->group("Hyperparameters");
    a.hp_options.emplace_back(std::string(name), opt);
  });
}

void run_build(BuildArgs& a) {
  RunConfig cfg = resolve(a.common);
  for (std::size_t i = 0; i < a.hp_options.size(); ++i)
    if (a.hp_options[i].second->count() > 0) set_hyperparam(cfg.hp, a.hp_options[i].first, a.hp_values[i]);
  if (a.common.seed) cfg.hp.seed = *a.common.seed;
  cfg.hp.validate();
  const std::string data = path_arg(a.data, cfg, "data");
  const std::string out = path_arg(a.out, cfg, "index", false).empty() ? path_arg(a.out, cfg, "out") : path_arg(a.out, cfg, "index");
  const std::string log = a.log.empty() ? path_arg(a.log, cfg, "log", false) : a.log;
  cfg.paths["data"] = data;
  cfg.paths["index"] = out;

  auto X = load_fvecs(data);
  const bool quiet = a.quiet || cfg.deterministic;
  auto result = train_and_build(std::move(X), cfg.hp, [&](const TrainState& st) {
    if (quiet) return;
    const auto& h = st.history.back();
    std::cerr << "epoch " << h.loss.epoch << " loss=" << fmt(h.loss.total) << " K=" << h.active_count << '\n';
  });
  save_index(result.index, out);
  const std::string log_path = log.empty() ? sibling(out, ".train.csv") : log;
  {
    auto os = open_out(log_path);
    write_training_log(os, result.training);
  }
  if (!a.dump_config.empty()) {
    auto os = open_out(a.dump_config);
    os << serialize_config(cfg);
  }
  std::cout << "build n=" << result.index.size() << " d=" << result.index.dim() << " K=" << result.index.buckets.size()
            << " epochs=" << result.training.epoch << " index=" << out << " log=" << log_path << '\n';
}

// ---------------------------------------------------------------------------

struct BudgetArgs {
  std::string mode = "argmin";
  std::optional<double> tau;
  std::size_t topk = 3;
  std::optional<double> probe_ratio;
  std::optional<std::size_t> max_candidates;

  void add(CLI::App* cmd) {
    cmd->add_option("--bucket-mode", mode, "argmin | threshold | topk")->check(CLI::IsMember({"argmin", "threshold", "topk"}));
    cmd->add_option("--tau", tau, "Threshold for --bucket-mode threshold (default: index tau)");
    cmd->add_option("--topk", topk, "Bucket count for --bucket-mode topk");
    cmd->add_option("--probe-ratio", probe_ratio, "Fraction of bins probed per bucket (default: index probe_ratio)");
    cmd->add_option("--max-candidates", max_candidates, "Stop after this many candidates");
  }

  QueryBudget resolve(const HyperParams& hp) const {
    QueryBudget b;
    b.mode = mode == "argmin" ? BucketMode::Argmin : mode == "threshold" ? BucketMode::Threshold : BucketMode::TopK;
    b.tau = tau.value_or(hp.tau);
    b.topk = topk;
    b.probe_ratio = probe_ratio.value_or(hp.probe_ratio);
    b.max_candidates = max_candidates;
    b.validate();
    return b;
  }
};

struct QueryArgs {
  Common common;
  std::string index, queries, out;
  std::size_t k = 10;
  BudgetArgs budget;
};

void run_query(QueryArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const auto idx = load_index(path_arg(a.index, cfg, "index"));
  const auto Q = load_fvecs(path_arg(a.queries, cfg, "queries"));
  const QueryBudget b = a.budget.resolve(idx.hp);
  const Searcher s(idx);
  const auto rs = run_queries(s, Q, b, a.k);
  auto os = open_out(path_arg(a.out, cfg, "out"));
  os << "query,rank,id,distance,candidates_examined,bins_probed,buckets_probed\n";
  for (std::size_t q = 0; q < rs.size(); ++q)
    for (std::size_t r = 0; r < rs[q].neighbors.size(); ++r)
      os << q << ',' << r << ',' << rs[q].neighbors[r].id << ',' << fmt(rs[q].neighbors[r].distance) << ','
         << rs[q].candidates_examined << ',' << rs[q].bins_probed << ',' << rs[q].buckets_probed << '\n';
  std::cout << "query queries=" << rs.size() << " budget=" << to_string(b) << '\n';
}

// ---------------------------------------------------------------------------

struct GtArgs {
  Common common;
  std::string data, queries, out;
  std::size_t k = 10;
};

void run_gt(GtArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const auto X = load_fvecs(path_arg(a.data, cfg, "data"));
  const auto Q = load_fvecs(path_arg(a.queries, cfg, "queries"));
  const auto gt = brute_force_knn(X, Q, std::min(a.k, X.size()));
  save_ivecs(path_arg(a.out, cfg, "out"), ground_truth_matrix(gt));
  std::cout << "gt queries=" << Q.size() << " k=" << gt.k << '\n';
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string index, queries, gt, budgets = "argmin@0.1,argmin@0.3,argmin@1", out;
};

void run_eval(EvalArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const auto idx = load_index(path_arg(a.index, cfg, "index"));
  const auto Q = load_fvecs(path_arg(a.queries, cfg, "queries"));
  const auto gt = ground_truth_from(load_ivecs(path_arg(a.gt, cfg, "gt")), idx.size());
  if (gt.ids.size() != Q.size()) throw DimensionMismatch(Q.size(), gt.ids.size());
  const auto budgets = parse_budget_list(a.budgets, idx.hp.tau);
  const auto report = bench_sweep(idx, Q, gt, budgets, cfg.deterministic);
  auto os = open_out(path_arg(a.out, cfg, "out"));
  write_eval_csv(os, report);
  for (const auto& row : report.rows)
    std::cout << row.label << " recall@1=" << fmt(row.recall_at_1) << " recall10@10=" << fmt(row.recall_10_at_10)
              << " candidates=" << fmt(row.mean_candidates) << '\n';
}

// ---------------------------------------------------------------------------

struct ClassifyArgs {
  Common common;
  std::string index, labels, queries, query_labels, out;
  int variant = 1;
  std::size_t topk = 3;
  std::optional<double> probe_ratio;
};

void run_classify(ClassifyArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const auto idx = load_index(path_arg(a.index, cfg, "index"));
  const auto labels = load_labels(path_arg(a.labels, cfg, "labels"));
  const auto Q = load_fvecs(path_arg(a.queries, cfg, "queries"));
  const std::string ql_path = path_arg(a.query_labels, cfg, "query_labels", false);
  HyperParams hp = idx.hp;
  if (a.probe_ratio) hp.probe_ratio = *a.probe_ratio;
  const auto budget = variant_budget(a.variant, hp, a.topk);
  const Searcher s(idx);
  const auto predicted = classify_all(s, Q, labels, budget);
  std::optional<std::vector<std::int32_t>> truth;
  if (!ql_path.empty()) {
    truth = load_labels(ql_path);
    if (truth->size() != Q.size()) throw DimensionMismatch(Q.size(), truth->size());
  }
  auto os = open_out(path_arg(a.out, cfg, "out"));
  os << "query,predicted" << (truth ? ",truth" : "") << '\n';
  for (std::size_t q = 0; q < predicted.size(); ++q) {
    os << q << ',' << predicted[q];
    if (truth) os << ',' << (*truth)[q];
    os << '\n';
  }
  std::cout << "classify variant=" << a.variant << " queries=" << Q.size();
  if (truth) std::cout << " accuracy=" << fmt(accuracy(predicted, *truth));
  std::cout << '\n';
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  Common common;
  std::string index;
};

void run_inspect(InspectArgs& a) {
  const RunConfig cfg = resolve(a.common);
  const auto idx = load_index(path_arg(a.index, cfg, "index"));
  std::size_t degenerate = 0;
  std::size_t total_members = 0;
  std::map<std::size_t, std::size_t> card_hist;  // floor(log2(size)) -> count
  std::map<std::size_t, std::size_t> bins_hist;
  for (const auto& b : idx.buckets) {
    degenerate += b.degenerate ? 1 : 0;
    total_members += b.members.size();
    ++card_hist[static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(b.members.size()))))];
    ++bins_hist[b.bins.size()];
  }
  std::cout << "n=" << idx.size() << " d=" << idx.dim() << " K=" << idx.buckets.size() << " gaussians_total=" << idx.gaussians.size()
            << " degenerate_buckets=" << degenerate << " mean_bucket=" << fmt(static_cast<double>(total_members) / static_cast<double>(idx.buckets.size()))
            << '\n';
  std::cout << "bucket_cardinality_histogram (range: buckets)\n";
  for (const auto& [lg, count] : card_hist)
    std::cout << "  [" << (std::size_t{1} << lg) << ", " << (std::size_t{1} << (lg + 1)) << "): " << count << '\n';
  std::cout << "bins_per_bucket (bins: buckets)\n";
  for (const auto& [bins, count] : bins_hist) std::cout << "  " << bins << ": " << count << '\n';
}

int report_error(const std::string& kind, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  std::cerr << "error kind=" << kind << " msg=" << flat << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GARLIC approximate nearest-neighbor index"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a labeled Gaussian-mixture dataset");
  add_common(c_synth, synth.common);
  c_synth->add_option("--n", synth.opt.n, "Number of base points")->check(CLI::PositiveNumber);
  c_synth->add_option("--d", synth.opt.d, "Dimension")->check(CLI::Range(2, 1 << 20));
  c_synth->add_option("--components", synth.opt.components, "Mixture components")->check(CLI::PositiveNumber);
  c_synth->add_option("--spread", synth.opt.spread, "Covariance scale");
  c_synth->add_option("--label-noise", synth.opt.label_noise, "Fraction of flipped labels")->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--n-queries", synth.n_queries, "Extra held-out query points from the same mixture");
  c_synth->add_option("--out", synth.out, "Output base .fvecs");
  c_synth->add_option("--labels", synth.labels, "Output labels (default: <out>.labels)");
  c_synth->add_option("--queries-out", synth.queries_out, "Output queries .fvecs (default: <out>.queries.fvecs)");
  c_synth->add_option("--query-labels", synth.query_labels, "Output query labels");

  BuildArgs build;
  auto* c_build = app.add_subcommand("build", "Train Gaussians and write an index");
  add_common(c_build, build.common);
  c_build->add_option("--data", build.data, "Base vectors (.fvecs)");
  c_build->add_option("--out", build.out, "Output index file");
  c_build->add_option("--log", build.log, "Training CSV (default: <out>.train.csv)");
  c_build->add_option("--dump-config", build.dump_config, "Write the effective configuration here");
  c_build->add_flag("--quiet", build.quiet, "No per-epoch progress");
  add_hp_flags(c_build, build);

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "k-NN search");
  add_common(c_query, query.common);
  c_query->add_option("--index", query.index, "Index file");
  c_query->add_option("--queries", query.queries, "Query vectors (.fvecs)");
  c_query->add_option("--k", query.k, "Neighbors per query")->check(CLI::PositiveNumber);
  c_query->add_option("--out", query.out, "Results CSV");
  query.budget.add(c_query);

  GtArgs gt;
  auto* c_gt = app.add_subcommand("gt", "Exact ground truth by brute force");
  add_common(c_gt, gt.common);
  c_gt->add_option("--data", gt.data, "Base vectors (.fvecs)");
  c_gt->add_option("--queries", gt.queries, "Query vectors (.fvecs)");
  c_gt->add_option("--k", gt.k, "Neighbors per query")->check(CLI::PositiveNumber);
  c_gt->add_option("--out", gt.out, "Output .ivecs");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Recall / candidate sweep");
  add_common(c_eval, eval.common);
  c_eval->add_option("--index", eval.index, "Index file");
  c_eval->add_option("--queries", eval.queries, "Query vectors (.fvecs)");
  c_eval->add_option("--gt", eval.gt, "Ground truth (.ivecs)");
  c_eval->add_option("--budgets", eval.budgets, "Comma-separated budgets, e.g. argmin@0.3,topk:4@0.5,threshold@1");
  c_eval->add_option("--out", eval.out, "Report CSV");

  ClassifyArgs cls;
  auto* c_cls = app.add_subcommand("classify", "Majority-vote classification");
  add_common(c_cls, cls.common);
  c_cls->add_option("--index", cls.index, "Index file");
  c_cls->add_option("--labels", cls.labels, "Labels of the indexed points");
  c_cls->add_option("--queries", cls.queries, "Query vectors (.fvecs)");
  c_cls->add_option("--query-labels", cls.query_labels, "True query labels (reports accuracy)");
  c_cls->add_option("--variant", cls.variant, "1: argmin, 2: within tau, 3: top-k buckets")->check(CLI::IsMember({1, 2, 3}));
  c_cls->add_option("--topk", cls.topk, "Bucket count for variant 3")->check(CLI::PositiveNumber);
  c_cls->add_option("--probe-ratio", cls.probe_ratio, "Fraction of bins probed");
  c_cls->add_option("--out", cls.out, "Predictions CSV");

  InspectArgs inspect;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize an index");
  add_common(c_inspect, inspect.common);
  c_inspect->add_option("--index", inspect.index, "Index file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string flat = e.what();
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    std::cerr << "error kind=usage msg=" << flat << '\n';
    return 2;
  }

  try {
    if (*c_synth) run_synth(synth);
    else if (*c_build) run_build(build);
    else if (*c_query) run_query(query);
    else if (*c_gt) run_gt(gt);
    else if (*c_eval) run_eval(eval);
    else if (*c_cls) run_classify(cls);
    else if (*c_inspect) run_inspect(inspect);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
