// apcde: batch CLI for training and evaluating augmented-posterior
// conditional density flows.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "apcde/checkpoint.hpp"
#include "apcde/config.hpp"
#include "apcde/data.hpp"
#include "apcde/inference.hpp"
#include "apcde/pgm.hpp"
#include "apcde/sdr.hpp"
#include "apcde/train.hpp"

using namespace apcde;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// schema text: comma-separated "cat:K" and "lin:m" entries, head order
std::vector<ColumnSpec> parse_schema(const std::string& text) {
  std::vector<ColumnSpec> schema;
  if (text.empty()) return schema;
  for (const std::string& field : split(text, ',')) {
    auto parts = split(field, ':');
    if (parts.size() != 2) throw ConfigError("schema: expected kind:count in '" + field + "'");
    ColumnSpec spec;
    int count = 0;
    try {
      count = std::stoi(parts[1]);
    } catch (const std::exception&) {
      throw ConfigError("schema: bad count in '" + field + "'");
    }
    if (parts[0] == "cat") {
      spec.kind = HeadKind::categorical;
      spec.K = count;
    } else if (parts[0] == "lin") {
      spec.kind = HeadKind::linear_gaussian;
      spec.m = count;
    } else {
      throw ConfigError("schema: unknown kind '" + parts[0] + "'");
    }
    schema.push_back(spec);
  }
  return schema;
}

// z_P placement text: "level:lo:hi" with level "final" or a 1-based number
ZpSpec parse_zp(const std::string& text) {
  auto parts = split(text, ':');
  if (parts.size() != 3) throw ConfigError("zp spec: expected level:lo:hi in '" + text + "'");
  ZpSpec spec;
  try {
    spec.level = parts[0] == "final" ? 0 : std::stoi(parts[0]);
    spec.lo = std::stoi(parts[1]);
    spec.hi = std::stoi(parts[2]);
  } catch (const std::exception&) {
    throw ConfigError("zp spec: bad number in '" + text + "'");
  }
  return spec;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 1;
};

KvConfig load_config(const CommonArgs& args) {
  KvConfig cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::uint64_t resolve_seed(const CommonArgs& args, const KvConfig& cfg) {
  return args.seed_given ? args.seed : cfg.get_u64("seed", 1);
}

Dataset load_prepped(const std::string& path, const std::vector<ColumnSpec>& schema,
                     const DataPrep& prep, std::uint64_t seed) {
  Dataset ds = load_dataset(path, schema);
  if (prep.dequantize_bits > 0) {
    Rng rng(seed, Stream::dequantize);
    ds.y = dequantize(map_to_byte_range(ds.y, prep.source_max), prep.dequantize_bits, rng);
  }
  return ds;
}

// evaluation data for a trained model; falls back to a response-only file
// when the command does not need covariates
Dataset load_for_model(const Checkpoint& ckpt, const std::string& path, std::uint64_t seed,
                       bool need_covariates) {
  std::vector<ColumnSpec> schema = schema_from_heads(ckpt.head_specs);
  try {
    return load_prepped(path, schema, ckpt.prep, seed);
  } catch (const SchemaError&) {
    if (need_covariates) throw;
    return load_prepped(path, {}, ckpt.prep, seed);
  }
}

int run_train(const CommonArgs& common, std::string data_path, std::string out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  if (data_path.empty()) data_path = cfg.get_str("data.path", "");
  if (data_path.empty()) throw ConfigError("train: no dataset (set --data or data.path)");
  if (out_path.empty()) out_path = cfg.get_str("out.checkpoint", "model.ckpt");

  std::vector<ColumnSpec> schema = parse_schema(cfg.get_str("data.schema", ""));
  DataPrep prep;
  prep.dequantize_bits = cfg.get_int("data.dequantize_bits", 0);
  prep.source_max = cfg.get_double("data.source_max", 255.0);
  prep.scale_divisor = cfg.get_double("data.scale_divisor", 256.0);

  Dataset data = load_prepped(data_path, schema, prep, seed);

  ArchConfig arch;
  arch.p = data.p();
  arch.levels = cfg.get_int("arch.levels", 2);
  arch.depth = cfg.get_int("arch.depth", 4);
  arch.hidden = cfg.get_int_list("arch.hidden", {64});
  std::string variant = cfg.get_str("arch.coupling", "additive");
  if (variant == "additive")
    arch.variant = CouplingVariant::additive;
  else if (variant == "affine")
    arch.variant = CouplingVariant::affine;
  else
    throw ConfigError("arch.coupling must be additive or affine");

  std::vector<HeadSpec> heads;
  std::vector<ZpSpec> zp;
  bool any_zp = false;
  for (std::size_t h = 0; h < schema.size(); ++h) {
    std::string prefix = "head" + std::to_string(h) + ".";
    HeadSpec spec;
    spec.kind = schema[h].kind;
    spec.K = schema[h].K;
    spec.m = schema[h].m;
    spec.d = cfg.get_int(prefix + "d", 0);
    if (spec.d < 1) throw ConfigError("train: " + prefix + "d must be set to the z_P width");
    spec.lambda = cfg.get_double(prefix + "lambda", 1.0);
    spec.free_intercept = cfg.get_bool(prefix + "free_intercept", false);
    spec.pin_noise = cfg.get_bool(prefix + "pin_noise", false);
    spec.noise_value = cfg.get_double(prefix + "noise_value", 0.01);
    spec.label_base = data.prov.label_base;
    heads.push_back(spec);
    std::string zp_text = cfg.get_str(prefix + "zp", "");
    zp.push_back(zp_text.empty() ? ZpSpec{} : parse_zp(zp_text));
    if (!zp_text.empty()) any_zp = true;
  }
  if (!any_zp) zp.clear();

  TrainConfig train_cfg;
  train_cfg.epochs = cfg.get_int("train.epochs", 200);
  train_cfg.batch_size = cfg.get_int("train.batch_size", 64);
  train_cfg.lr_peak = cfg.get_double("train.lr_peak", 5e-4);
  train_cfg.warmup_epochs = cfg.get_int("train.warmup_epochs", 10);
  train_cfg.lr_final = cfg.get_double("train.lr_final", 1e-4);
  train_cfg.mc_samples = cfg.get_int("train.mc_samples", 1000);
  train_cfg.clip_norm = cfg.get_double("train.clip_norm", 0.0);
  train_cfg.loss_log = cfg.get_str("train.loss_log", "");
  train_cfg.seed = seed;
  cfg.check_all_consumed();

  Model model = build_model(arch, heads, zp, seed);
  Checkpoint ckpt = train(model, data, train_cfg, prep);
  save_checkpoint(ckpt, out_path);

  std::cout << "trained " << train_cfg.epochs << " epochs on " << data.n() << " samples";
  if (!ckpt.loss_trace.empty()) std::cout << ", final loss " << ckpt.loss_trace.back();
  std::cout << "\ncheckpoint: " << out_path << " (fingerprint " << checkpoint_fingerprint(ckpt)
            << ")\n";
  return 0;
}

int run_density(const CommonArgs& common, const std::string& model_path,
                const std::string& data_path, const std::string& out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Checkpoint ckpt = load_checkpoint(model_path);
  Model model = model_from_checkpoint(ckpt);
  Dataset data = load_for_model(ckpt, data_path, seed, true);
  DensityReport report = density_report(model, data, ckpt.prep.scale_divisor, seed,
                                        common.threads, checkpoint_fingerprint(ckpt));
  write_density_csv(report, out_path);
  double mean_bpd = 0.0;
  for (double b : report.bpd) mean_bpd += b;
  std::cout << "density report: " << data.n() << " rows, mean bpd "
            << mean_bpd / std::max(1, data.n()) << " -> " << out_path << "\n";
  return 0;
}

int run_embed(const CommonArgs& common, const std::string& model_path,
              const std::string& data_path, const std::string& out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Checkpoint ckpt = load_checkpoint(model_path);
  Model model = model_from_checkpoint(ckpt);
  Dataset data = load_for_model(ckpt, data_path, seed, false);

  std::ofstream out(out_path);
  if (!out) throw DataError("embed: cannot open " + out_path);
  out << "id";
  for (std::size_t h = 0; h < model.base.heads.size(); ++h)
    for (int i = 0; i < model.base.heads[h].spec.d; ++i) out << ",zp" << h << "_" << i;
  for (std::size_t i = 0; i < model.flow.layout.zn_indices.size(); ++i) out << ",zn_" << i;
  out << "\n";
  char buf[40];
  for (int i = 0; i < data.n(); ++i) {
    Embedding emb = embed(model, data.row_y(i));
    out << i;
    for (const Tensor& zp : emb.zp)
      for (double v : zp.data()) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
      }
    for (double v : emb.zn.data()) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  std::cout << "embedded " << data.n() << " samples -> " << out_path << "\n";
  return 0;
}

int run_classify(const CommonArgs& common, const std::string& model_path,
                 const std::string& data_path, const std::string& out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Checkpoint ckpt = load_checkpoint(model_path);
  Model model = model_from_checkpoint(ckpt);
  Dataset data = load_for_model(ckpt, data_path, seed, false);

  int cat_head = -1, label_off = -1, off = 0;
  for (std::size_t h = 0; h < model.base.heads.size(); ++h) {
    if (model.base.heads[h].spec.kind == HeadKind::categorical && cat_head < 0) {
      cat_head = static_cast<int>(h);
      label_off = off;
    }
    off += model.base.heads[h].spec.kind == HeadKind::categorical ? 1
                                                                  : model.base.heads[h].spec.m;
  }
  if (cat_head < 0) throw ConfigError("classify: model has no categorical head");
  const bool observed = data.x_dim() > label_off;
  const int shift = model.base.heads[cat_head].spec.label_base == 0 ? -1 : 0;

  std::ofstream out(out_path);
  if (!out) throw DataError("classify: cannot open " + out_path);
  out << (observed ? "id,predicted,tie,observed,match\n" : "id,predicted,tie\n");
  int correct = 0;
  for (int i = 0; i < data.n(); ++i) {
    Classified c = classify(model, data.row_y(i));
    out << i << "," << (c.label + shift) << "," << (c.tie ? 1 : 0);
    if (observed) {
      int obs = static_cast<int>(data.x.at(i, label_off));
      bool match = obs == c.label;
      correct += match;
      out << "," << (obs + shift) << "," << (match ? 1 : 0);
    }
    out << "\n";
  }
  std::cout << "classified " << data.n() << " samples -> " << out_path;
  if (observed)
    std::cout << " (error rate "
              << 1.0 - static_cast<double>(correct) / std::max(1, data.n()) << ")";
  std::cout << "\n";
  return 0;
}

void write_samples(const std::vector<Tensor>& samples, const std::string& out_path,
                   int pgm_w, int pgm_h, const std::string& stem) {
  if (pgm_w > 0) {
    std::filesystem::create_directories(out_path);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto file = std::filesystem::path(out_path) / (stem + std::to_string(i) + ".pgm");
      write_pgm(file.string(), samples[i], pgm_w, pgm_h);
    }
  } else {
    std::ofstream out(out_path);
    if (!out) throw DataError("sample: cannot open " + out_path);
    for (std::size_t j = 0; j < samples[0].size(); ++j) out << (j ? "," : "") << "y" << j;
    out << "\n";
    char buf[40];
    for (const Tensor& s : samples) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        std::snprintf(buf, sizeof buf, j ? ",%.17g" : "%.17g", s[j]);
        out << buf;
      }
      out << "\n";
    }
  }
}

std::pair<int, int> parse_pgm_size(const std::string& text) {
  if (text.empty()) return {0, 0};
  auto parts = split(text, 'x');
  if (parts.size() != 2) throw ConfigError("--pgm expects WxH, got '" + text + "'");
  try {
    return {std::stoi(parts[0]), std::stoi(parts[1])};
  } catch (const std::exception&) {
    throw ConfigError("--pgm expects WxH, got '" + text + "'");
  }
}

int run_sample(const CommonArgs& common, const std::string& model_path, int n,
               const std::string& out_path, const std::string& pgm_size) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Model model = model_from_checkpoint(load_checkpoint(model_path));
  Rng rng(seed, Stream::sample);
  std::vector<Tensor> samples = sample_uncond(model, n, rng);
  auto [w, h] = parse_pgm_size(pgm_size);
  write_samples(samples, out_path, w, h, "sample_");
  std::cout << "sampled " << n << " -> " << out_path << "\n";
  return 0;
}

int run_generate(const CommonArgs& common, const std::string& model_path,
                 const std::vector<std::string>& fix_zp_texts,
                 const std::vector<std::string>& grid_texts, int draws,
                 const std::string& out_path, const std::string& pgm_size) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Model model = model_from_checkpoint(load_checkpoint(model_path));
  const std::size_t n_heads = model.base.heads.size();
  if (n_heads == 0) throw ConfigError("generate: model has no predictive heads");

  // fixed blocks: "h=v1,v2,..."
  std::vector<Tensor> fixed(n_heads);
  for (const std::string& text : fix_zp_texts) {
    auto parts = split(text, '=');
    if (parts.size() != 2) throw ConfigError("--fix-zp expects h=v1,v2,... got '" + text + "'");
    int head = 0;
    std::vector<double> values;
    try {
      head = std::stoi(parts[0]);
      for (const std::string& v : split(parts[1], ',')) values.push_back(std::stod(v));
    } catch (const std::exception&) {
      throw ConfigError("--fix-zp: bad number in '" + text + "'");
    }
    if (head < 0 || head >= static_cast<int>(n_heads))
      throw ConfigError("--fix-zp: head index out of range");
    if (static_cast<int>(values.size()) != model.base.heads[head].spec.d)
      throw ConfigError("--fix-zp: expected " + std::to_string(model.base.heads[head].spec.d) +
                        " values for head " + std::to_string(head));
    fixed[head] = Tensor::vec(values);
  }

  // grid sweeps: "h:lo:hi:steps" over a linear-gaussian head's covariate,
  // mapped through the regression inverse
  struct GridAxis {
    int head;
    double lo, hi;
    int steps;
  };
  std::vector<GridAxis> axes;
  for (const std::string& text : grid_texts) {
    auto parts = split(text, ':');
    if (parts.size() != 4)
      throw ConfigError("--grid expects h:lo:hi:steps, got '" + text + "'");
    GridAxis axis{};
    try {
      axis.head = std::stoi(parts[0]);
      axis.lo = std::stod(parts[1]);
      axis.hi = std::stod(parts[2]);
      axis.steps = std::stoi(parts[3]);
    } catch (const std::exception&) {
      throw ConfigError("--grid: bad number in '" + text + "'");
    }
    if (axis.head < 0 || axis.head >= static_cast<int>(n_heads))
      throw ConfigError("--grid: head index out of range");
    if (model.base.heads[axis.head].spec.kind != HeadKind::linear_gaussian)
      throw ConfigError("--grid: head " + std::to_string(axis.head) +
                        " is not linear-gaussian");
    if (axis.steps < 1) throw ConfigError("--grid: steps must be >= 1");
    axes.push_back(axis);
  }

  for (std::size_t h = 0; h < n_heads; ++h) {
    bool on_grid = false;
    for (const GridAxis& axis : axes) on_grid |= axis.head == static_cast<int>(h);
    if (!on_grid && fixed[h].size() == 0)
      throw ConfigError("generate: head " + std::to_string(h) + " needs --fix-zp or --grid");
  }

  auto [w, hh] = parse_pgm_size(pgm_size);
  Rng rng(seed, Stream::sample);
  int cells = 1;
  for (const GridAxis& axis : axes) cells *= axis.steps;

  std::vector<Tensor> flat_out;
  std::vector<std::string> stems;
  std::vector<int> index(axes.size(), 0);
  for (int cell = 0; cell < cells; ++cell) {
    std::vector<Tensor> zp = fixed;
    std::string stem = "gen_";
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const GridAxis& axis = axes[a];
      double frac = axis.steps == 1
                        ? 0.0
                        : static_cast<double>(index[a]) / static_cast<double>(axis.steps - 1);
      double target = axis.lo + frac * (axis.hi - axis.lo);
      zp[axis.head] = zp_for_covariate(
          model, axis.head,
          Tensor::full({static_cast<std::size_t>(model.base.heads[axis.head].spec.m)}, target));
      stem += "a" + std::to_string(a) + "_" + std::to_string(index[a]) + "_";
    }
    std::vector<Tensor> out = generate_fixed_zp(model, zp, draws, rng);
    for (int j = 0; j < draws; ++j) {
      flat_out.push_back(out[j]);
      stems.push_back(stem + "j" + std::to_string(j));
    }
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++index[a] < static_cast<int>(axes[a].steps)) break;
      index[a] = 0;
    }
  }

  if (w > 0) {
    std::filesystem::create_directories(out_path);
    for (std::size_t i = 0; i < flat_out.size(); ++i) {
      auto file = std::filesystem::path(out_path) / (stems[i] + ".pgm");
      write_pgm(file.string(), flat_out[i], w, hh);
    }
  } else {
    write_samples(flat_out, out_path, 0, 0, "");
  }
  std::cout << "generated " << flat_out.size() << " responses -> " << out_path << "\n";
  return 0;
}

int run_validate_sdr(const CommonArgs& common, const std::string& model_path,
                     const std::string& data_path, const std::string& probe_data_path,
                     int draws, int probe_hidden, int probe_epochs, double probe_lr,
                     const std::string& out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Checkpoint ckpt = load_checkpoint(model_path);
  Model model = model_from_checkpoint(ckpt);
  Dataset data = load_for_model(ckpt, data_path, seed, true);
  Dataset probe_data =
      probe_data_path.empty() ? data : load_for_model(ckpt, probe_data_path, seed, true);

  ProbeConfig probe_cfg;
  probe_cfg.hidden = probe_hidden;
  probe_cfg.epochs = probe_epochs;
  probe_cfg.lr = probe_lr;
  probe_cfg.seed = seed;
  ProbeClassifier probe = train_probe(probe_data, probe_cfg);

  SdrResult result = sdr_agreement(model, probe, data, draws, seed);
  if (!out_path.empty()) {
    int base = 1;
    for (const PredictiveHead& h : model.base.heads)
      if (h.spec.kind == HeadKind::categorical) {
        base = h.spec.label_base;
        break;
      }
    write_sdr_csv(result, base, out_path);
  }
  std::printf("probe holdout accuracy: %.4f\n", probe.holdout_accuracy);
  std::printf("sdr agreement (J=%d): %.4f\n", draws, result.rate);
  return 0;
}

int run_synth(const CommonArgs& common, const std::string& spec_text, int n,
              const std::string& out_path) {
  KvConfig cfg = load_config(common);
  std::uint64_t seed = resolve_seed(common, cfg);
  cfg.check_all_consumed();
  Dataset ds = synth_conditional_mixture(parse_mixture_spec(spec_text), n, seed);
  save_dataset(ds, out_path);
  std::cout << "synthesized " << n << " samples -> " << out_path;
  if (std::isfinite(ds.prov.bayes_error))
    std::cout << " (generator Bayes error " << ds.prov.bayes_error << ")";
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AP-CDE: conditional density estimation with an augmented-posterior flow"};
  app.require_subcommand(1);
  app.fallthrough(true);  // global options are accepted after the subcommand

  CommonArgs common;
  app.add_option("--config", common.config_path, "key=value configuration file");
  app.add_option("--set", common.overrides, "override a config key (key=value)");
  app.add_option("--seed", common.seed, "master seed for all randomness")
      ->each([&common](const std::string&) { common.seed_given = true; });
  app.add_option("--threads", common.threads, "worker threads for batch evaluation");

  std::string data_path, model_path, out_path, probe_data, spec_text, pgm_size;
  int n = 1, draws = 10, probe_hidden = 0, probe_epochs = 100;
  double probe_lr = 0.01;
  std::vector<std::string> fix_zp, grid;

  CLI::App* train_cmd = app.add_subcommand("train", "fit a model and write a checkpoint");
  train_cmd->add_option("--data", data_path, "training CSV (overrides data.path)");
  train_cmd->add_option("--out", out_path, "checkpoint path (overrides out.checkpoint)");

  CLI::App* density_cmd = app.add_subcommand("density", "per-sample density report");
  density_cmd->add_option("--model", model_path)->required();
  density_cmd->add_option("--data", data_path)->required();
  density_cmd->add_option("--out", out_path)->required();

  CLI::App* embed_cmd = app.add_subcommand("embed", "write z_P / z_N embeddings");
  embed_cmd->add_option("--model", model_path)->required();
  embed_cmd->add_option("--data", data_path)->required();
  embed_cmd->add_option("--out", out_path)->required();

  CLI::App* classify_cmd = app.add_subcommand("classify", "argmax class predictions");
  classify_cmd->add_option("--model", model_path)->required();
  classify_cmd->add_option("--data", data_path)->required();
  classify_cmd->add_option("--out", out_path)->required();

  CLI::App* sample_cmd = app.add_subcommand("sample", "unconditional samples");
  sample_cmd->add_option("--model", model_path)->required();
  sample_cmd->add_option("-n,--count", n, "number of samples");
  sample_cmd->add_option("--out", out_path)->required();
  sample_cmd->add_option("--pgm", pgm_size, "write 8-bit PGM images of WxH");

  CLI::App* generate_cmd =
      app.add_subcommand("generate", "conditional generation with fixed z_P");
  generate_cmd->add_option("--model", model_path)->required();
  generate_cmd->add_option("--fix-zp", fix_zp, "fix a head's z_P block: h=v1,v2,...");
  generate_cmd->add_option("--grid", grid,
                           "sweep a linear head's covariate: h:lo:hi:steps (repeatable)");
  generate_cmd->add_option("-j,--draws", draws, "z_N draws per grid point");
  generate_cmd->add_option("--out", out_path)->required();
  generate_cmd->add_option("--pgm", pgm_size, "write 8-bit PGM images of WxH");

  CLI::App* sdr_cmd =
      app.add_subcommand("validate-sdr", "sufficient dimension reduction audit");
  sdr_cmd->add_option("--model", model_path)->required();
  sdr_cmd->add_option("--data", data_path)->required();
  sdr_cmd->add_option("--probe-data", probe_data, "probe training CSV (default: --data)");
  sdr_cmd->add_option("-j,--draws", draws, "regenerations per sample");
  sdr_cmd->add_option("--probe-hidden", probe_hidden, "probe hidden width (0: logistic)");
  sdr_cmd->add_option("--probe-epochs", probe_epochs);
  sdr_cmd->add_option("--probe-lr", probe_lr);
  sdr_cmd->add_option("--out", out_path, "per-sample agreement CSV");

  CLI::App* synth_cmd = app.add_subcommand("synth-data", "draw a synthetic mixture dataset");
  synth_cmd->add_option("--spec", spec_text, "e.g. K=2;mu=0,2|0,-2;sigma=0.5;probs=0.5,0.5")
      ->required();
  synth_cmd->add_option("-n,--count", n, "number of samples")->required();
  synth_cmd->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (*train_cmd) return run_train(common, data_path, out_path);
    if (*density_cmd) return run_density(common, model_path, data_path, out_path);
    if (*embed_cmd) return run_embed(common, model_path, data_path, out_path);
    if (*classify_cmd) return run_classify(common, model_path, data_path, out_path);
    if (*sample_cmd) return run_sample(common, model_path, n, out_path, pgm_size);
    if (*generate_cmd)
      return run_generate(common, model_path, fix_zp, grid, draws, out_path, pgm_size);
    if (*sdr_cmd)
      return run_validate_sdr(common, model_path, data_path, probe_data, draws, probe_hidden,
                              probe_epochs, probe_lr, out_path);
    if (*synth_cmd) return run_synth(common, spec_text, n, out_path);
    std::cerr << app.help();
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
