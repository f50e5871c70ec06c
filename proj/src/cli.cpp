#include "rpg/cli.hpp"

#include "rpg/config.hpp"
#include "rpg/dataio.hpp"
#include "rpg/metrics.hpp"
#include "rpg/model.hpp"
#include "rpg/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace rpg {

namespace fs = std::filesystem;
using nlohmann::json;

json manifest_json(const RunManifest& m) {
  return json{{"tool", "rpg"},
              {"version", m.version},
              {"command", m.command},
              {"args", m.args},
              {"seed", m.seed},
              {"inputs", m.inputs},
              {"output", m.output},
              {"config", m.config}};
}

RunManifest parse_manifest(const json& j) {
  RunManifest m;
  if (!j.is_object() || j.value("tool", "") != "rpg") throw std::invalid_argument("not an rpg run manifest");
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.output = j.value("output", std::string{});
  if (j.contains("config")) m.config = j.at("config");
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path.string());
  try {
    return parse_manifest(json::parse(f));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
}

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void write_manifest(const RunManifest& m, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << manifest_json(m).dump(2) << '\n';
}

fs::path manifest_for_file(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

json checkpoint_config(const Checkpoint& c) { return run_config_json({c.generator, c.train}); }

PointCloud load_input(const std::string& path) { return normalize_cloud(load_cloud(path)); }

GenerationTrace<float> reconstruct_trace(const Checkpoint& ckpt, const PointCloud& cloud) {
  const auto z = encode<float>(cloud.points.cast<float>(), ckpt.params, ckpt.generator);
  return generate<float>(z.mean, ckpt.params, ckpt.generator);
}

std::vector<VectorX<float>> sample_latents(int n, std::uint64_t seed, int width) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorX<float>> out;
  for (int i = 0; i < n; ++i) {
    VectorX<float> z(width);
    for (int j = 0; j < width; ++j) z(j) = static_cast<float>(normal(rng));
    out.push_back(std::move(z));
  }
  return out;
}

void require_vae(const Checkpoint& ckpt, const std::string& command) {
  if (!ckpt.generator.vae_mode)
    throw std::runtime_error(command + ": checkpoint was not trained in VAE mode; sampling needs vae_mode");
}

std::string index_name(const std::string& prefix, int i, const std::string& ext) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << ext;
  return os.str();
}

ColorMode parse_color(const std::string& name, int level) {
  if (name == "none") return ColorMode::none();
  if (name == "ancestor") return ColorMode::by_ancestor(level);
  if (name == "stage") return ColorMode::by_stage();
  throw UsageError("unknown color mode '" + name + "'");
}

void check_level(const GeneratorConfig& g, int level) {
  if (level < 0 || level >= g.stages())
    throw UsageError("--level must be in [0, " + std::to_string(g.stages() - 1) + "] for this checkpoint");
}

template <typename T>
std::string list_str(const std::vector<T>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

struct Common {
  int threads = 1;
};

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  std::optional<int> epochs, batch_size, save_every;
  std::optional<double> learning_rate, lambda, beta;
  std::optional<std::uint64_t> seed;
  bool vae = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Common& c, const std::vector<std::string>& args, std::ostream& out) {
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch_size) rc.train.batch_size = *a.batch_size;
  if (a.save_every) rc.train.save_every = *a.save_every;
  if (a.learning_rate) rc.train.learning_rate = *a.learning_rate;
  if (a.lambda) rc.train.lambda = *a.lambda;
  if (a.beta) rc.train.beta = *a.beta;
  if (a.seed) rc.train.seed = *a.seed;
  if (a.vae) rc.generator.vae_mode = true;
  try {
    rc.generator.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Dataset ds = load_dataset(a.data);

  FitOptions opts;
  opts.out_dir = a.out;
  opts.threads = c.threads;
  if (!a.quiet) {
    out << "epoch,cd,reg,kl,total\n" << std::setprecision(8);
    opts.on_epoch = [&out](const EpochLog& e) {
      out << e.epoch << ',' << e.mean.cd << ',' << e.mean.reg << ',' << e.mean.kl << ','
          << e.mean.total << '\n';
    };
  }
  fit<float>(ds.clouds, rc.generator, rc.train, opts);

  RunManifest m;
  m.command = "train";
  m.args = args;
  m.seed = rc.train.seed;
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.inputs.push_back(a.data);
  m.output = a.out;
  m.config = run_config_json(rc);
  write_manifest(m, fs::path(a.out) / "manifest.json");
  out << "wrote " << (fs::path(a.out) / "final.rpgk").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReconstructArgs {
  std::string ckpt, input, out, color = "ancestor";
  int level = 1;
};

int cmd_reconstruct(const ReconstructArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const ColorMode mode = parse_color(a.color, a.level);
  if (mode.kind == ColorMode::Kind::ByAncestor) check_level(ckpt.generator, a.level);
  const PointCloud cloud = load_input(a.input);
  const auto trace = reconstruct_trace(ckpt, cloud);
  ensure_parent(a.out);
  export_ply(trace, mode, a.out);
  const double cd = chamfer(cloud.points, Points3<double>(trace.output().cast<double>()));
  out << format_metric({"cd", cd * kReportScale, true, 1, 1}) << '\n';

  RunManifest m{"reconstruct", args, 0, {a.ckpt, a.input}, a.out, checkpoint_config(ckpt)};
  write_manifest(m, manifest_for_file(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string ckpt, out;
  int n = 1;
  std::uint64_t seed = 0;
  int level = 1;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  require_vae(ckpt, "generate");
  check_level(ckpt.generator, a.level);
  fs::create_directories(a.out);
  const auto zs = sample_latents(a.n, a.seed, ckpt.generator.latent_width);
  for (int i = 0; i < a.n; ++i) {
    const auto trace = generate<float>(zs[static_cast<std::size_t>(i)], ckpt.params, ckpt.generator);
    const fs::path path = fs::path(a.out) / index_name("sample_", i, ".ply");
    export_ply(trace, ColorMode::by_ancestor(a.level), path);
    out << "wrote " << path.string() << '\n';
  }
  RunManifest m{"generate", args, a.seed, {a.ckpt}, a.out, checkpoint_config(ckpt)};
  write_manifest(m, fs::path(a.out) / "manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InterpolateArgs {
  std::string ckpt, a, b, out;
  int steps = 8;
  bool all_stages = false;
};

int cmd_interpolate(const InterpolateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto& g = ckpt.generator;
  const auto za = encode<float>(load_input(a.a).points.cast<float>(), ckpt.params, g).mean;
  const auto zb = encode<float>(load_input(a.b).points.cast<float>(), ckpt.params, g).mean;
  fs::create_directories(a.out);
  std::vector<Points3<double>> decoded;
  const auto codes = interpolate_latents<float>(za, zb, a.steps);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto trace = generate<float>(codes[i], ckpt.params, g);
    const fs::path path = fs::path(a.out) / index_name("interp_", static_cast<int>(i), ".ply");
    export_ply(trace, a.all_stages ? ColorMode::by_stage() : ColorMode::by_ancestor(std::min(1, g.stages() - 1)),
               path);
    decoded.push_back(trace.output().cast<double>());
  }
  const std::size_t n = decoded.size();
  out << format_metric({"endpoint_cd", chamfer(decoded.front(), decoded.back()) * kReportScale, true, 1, 1})
      << '\n';
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out << format_metric({"step_cd_" + std::to_string(i),
                          chamfer(decoded[i], decoded[i + 1]) * kReportScale, true, 1, 1})
        << '\n';
  }
  RunManifest m{"interpolate", args, 0, {a.ckpt, a.a, a.b}, a.out, checkpoint_config(ckpt)};
  write_manifest(m, fs::path(a.out) / "manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string ckpt, input, out;
  int level = 1;
};

int cmd_segment(const SegmentArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  check_level(ckpt.generator, a.level);
  const PointCloud cloud = load_input(a.input);
  const auto trace = reconstruct_trace(ckpt, cloud);
  const auto labels = segment(trace, ckpt.generator.stages(), a.level);
  ensure_parent(a.out);
  const Points3<double> generated = trace.output().cast<double>();
  export_ply(generated, labels, a.out);
  if (cloud.has_labels()) {
    const auto truth = transfer_labels(generated, cloud.points, cloud.labels);
    out << format_metric({"purity", purity(labels, truth), false, 1, 1}) << '\n';
  }
  RunManifest m{"segment", args, 0, {a.ckpt, a.input}, a.out, checkpoint_config(ckpt)};
  write_manifest(m, manifest_for_file(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, reference;
  int n_generated = 1;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  require_vae(ckpt, "eval");
  const Dataset ref = load_dataset(a.reference);
  CloudSet refs{{}, SetRole::Reference};
  for (const auto& cl : ref.clouds) refs.clouds.push_back(cl.points);
  CloudSet gens{{}, SetRole::Generated};
  for (const auto& z : sample_latents(a.n_generated, a.seed, ckpt.generator.latent_width))
    gens.clouds.push_back(generate<float>(z, ckpt.params, ckpt.generator).output().cast<double>());

  const Eigen::MatrixXd rg = pairwise_chamfer(refs, gens, c.threads);
  const Eigen::MatrixXd rr = self_chamfer(refs, c.threads);
  const Eigen::MatrixXd gg = self_chamfer(gens, c.threads);
  const std::size_t nr = refs.size(), ng = gens.size();
  out << format_metric({"mmd", mmd_from_distances(rg) * kReportScale, true, nr, ng}) << '\n';
  out << format_metric({"cov", coverage_from_distances(rg), false, nr, ng}) << '\n';
  out << format_metric({"1nna", one_nna_from_distances(rr, rg, gg), false, nr, ng}) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string ckpt, config, preset;
};

template <typename Scalar>
void print_tensors(const Parameters<Scalar>& params, std::ostream& out) {
  params.visit([&](const std::string& name, const MatrixX<Scalar>& m) {
    out << "tensor " << name << ' ' << m.rows() << 'x' << m.cols() << '\n';
  });
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const int sources = !a.ckpt.empty() + !a.config.empty() + !a.preset.empty();
  if (sources != 1) throw UsageError("inspect: give exactly one of --ckpt, --config, --preset");
  RunConfig rc;
  std::optional<Checkpoint> ckpt;
  if (!a.ckpt.empty()) {
    ckpt = load_checkpoint(a.ckpt);
    rc = {ckpt->generator, ckpt->train};
  } else if (!a.config.empty()) {
    rc = load_run_config(a.config);
  } else if (a.preset == "rpg2048") {
    rc.generator = GeneratorConfig::rpg2048();
  } else if (a.preset == "rpg3125") {
    rc.generator = GeneratorConfig::rpg3125();
  } else {
    throw UsageError("inspect: unknown preset '" + a.preset + "' (rpg2048, rpg3125)");
  }
  const auto& g = rc.generator;
  const auto& t = rc.train;
  out << run_config_json(rc).dump(2) << '\n';
  out << "k_schedule=" << list_str(g.k_schedule) << '\n';
  out << "stages=" << g.stages() << '\n';
  out << "leaf_count=" << g.leaf_count() << '\n';
  out << "latent_width=" << g.latent_width << '\n';
  out << "embed_width=" << g.embed_width << '\n';
  out << "vae_mode=" << (g.vae_mode ? "true" : "false") << '\n';
  out << "lambda=" << t.lambda << '\n';
  out << "learning_rate=" << t.learning_rate << '\n';
  out << "batch_size=" << t.batch_size << '\n';
  ParameterCount count;
  if (ckpt) {
    print_tensors(ckpt->params, out);
    count = count_parameters(ckpt->params);
  } else {
    print_tensors(zero_parameters<float>(g), out);
    count = count_parameters(g);
  }
  out << "parameters encoder=" << count.encoder << " generator=" << count.generator
      << " total=" << count.total() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind, out;
  int n = 2048;
  std::uint64_t seed = 0;
  double jitter = 0;
  bool binary = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  PointCloud cloud;
  try {
    cloud = synth_shape(a.kind, a.n, a.seed, a.jitter);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  ensure_parent(a.out);
  if (a.binary) {
    save_cloud_binary(cloud, a.out);
  } else {
    save_cloud_text(cloud, a.out);
  }
  out << "wrote " << a.out << " (" << cloud.size() << " points)\n";
  return kExitOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int run_replay(const std::string& path, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw UsageError("--replay cannot be nested");
  const RunManifest m = load_manifest(path);
  if (m.version != kToolVersion)
    err << "warning: manifest written by version " << m.version << ", running " << kToolVersion << '\n';
  return dispatch(m.args, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Recursive point cloud generator", "rpg"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(0, 1);
  app.fallthrough();

  Common common;
  std::string replay;
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--replay", replay, "Re-run the command recorded in a run manifest")
      ->check(CLI::ExistingFile);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train encoder and generator");
  t->add_option("--config", train.config, "JSON run configuration")->check(CLI::ExistingFile);
  t->add_option("--data", train.data, "Directory or list file of point clouds")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
  t->add_option("--batch-size", train.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--save-every", train.save_every)->check(CLI::NonNegativeNumber);
  t->add_option("--lr", train.learning_rate)->check(CLI::PositiveNumber);
  t->add_option("--lambda", train.lambda)->check(CLI::NonNegativeNumber);
  t->add_option("--beta", train.beta)->check(CLI::NonNegativeNumber);
  t->add_option("--seed", train.seed);
  t->add_flag("--vae", train.vae, "Train in VAE mode");
  t->add_flag("--quiet", train.quiet, "Do not print per-epoch losses");

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Encode and decode one cloud");
  r->add_option("--ckpt", rec.ckpt)->required()->check(CLI::ExistingFile);
  r->add_option("--input", rec.input)->required()->check(CLI::ExistingFile);
  r->add_option("--out", rec.out, "Output PLY")->required();
  r->add_option("--color", rec.color, "none, ancestor or stage")
      ->check(CLI::IsMember({"none", "ancestor", "stage"}));
  r->add_option("--level", rec.level, "Ancestor stage for --color ancestor");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Sample shapes from a VAE checkpoint");
  g->add_option("--ckpt", gen.ckpt)->required()->check(CLI::ExistingFile);
  g->add_option("--n", gen.n, "Number of samples")->required()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--level", gen.level, "Ancestor stage used for colors");

  InterpolateArgs interp;
  auto* i = app.add_subcommand("interpolate", "Decode a latent interpolation between two clouds");
  i->add_option("--ckpt", interp.ckpt)->required()->check(CLI::ExistingFile);
  i->add_option("--a", interp.a)->required()->check(CLI::ExistingFile);
  i->add_option("--b", interp.b)->required()->check(CLI::ExistingFile);
  i->add_option("--steps", interp.steps)->check(CLI::Range(2, 1 << 20));
  i->add_option("--out", interp.out, "Output directory")->required();
  i->add_flag("--all-stages", interp.all_stages, "Write every intermediate stage");

  SegmentArgs seg;
  auto* s = app.add_subcommand("segment", "Ancestor segmentation of a reconstructed cloud");
  s->add_option("--ckpt", seg.ckpt)->required()->check(CLI::ExistingFile);
  s->add_option("--input", seg.input)->required()->check(CLI::ExistingFile);
  s->add_option("--level", seg.level, "Ancestor stage");
  s->add_option("--out", seg.out, "Output PLY")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "MMD, COV and 1-NNA of sampled shapes");
  e->add_option("--ckpt", ev.ckpt)->required()->check(CLI::ExistingFile);
  e->add_option("--reference", ev.reference, "Directory or list file")->required()->check(CLI::ExistingPath);
  e->add_option("--n-generated", ev.n_generated)->required()->check(CLI::PositiveNumber);
  e->add_option("--seed", ev.seed);

  InspectArgs ins;
  auto* n = app.add_subcommand("inspect", "Print configuration and parameter counts");
  n->add_option("--ckpt", ins.ckpt)->check(CLI::ExistingFile);
  n->add_option("--config", ins.config)->check(CLI::ExistingFile);
  n->add_option("--preset", ins.preset, "rpg2048 or rpg3125");

  SynthArgs syn;
  auto* y = app.add_subcommand("synth", "Write a synthetic point cloud");
  y->add_option("--kind", syn.kind, "sphere, box, cylinder, table or tee")->required();
  y->add_option("--n", syn.n, "Number of points")->check(CLI::Range(8, 1 << 24));
  y->add_option("--seed", syn.seed);
  y->add_option("--jitter", syn.jitter)->check(CLI::NonNegativeNumber);
  y->add_option("--out", syn.out)->required();
  y->add_flag("--binary", syn.binary, "Binary point format");

  std::vector<std::string> argv_store{"rpg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!replay.empty()) {
      if (!app.get_subcommands().empty()) throw UsageError("--replay takes no subcommand");
      return run_replay(replay, out, err, depth);
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kExitUsage;
    }
    if (t->parsed()) return cmd_train(train, common, args, out);
    if (r->parsed()) return cmd_reconstruct(rec, args, out);
    if (g->parsed()) return cmd_generate(gen, args, out);
    if (i->parsed()) return cmd_interpolate(interp, args, out);
    if (s->parsed()) return cmd_segment(seg, args, out);
    if (e->parsed()) return cmd_eval(ev, common, out);
    if (n->parsed()) return cmd_inspect(ins, out);
    if (y->parsed()) return cmd_synth(syn, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err, 0);
}

int run_cli(const std::vector<std::string>& args) { return run_cli(args, std::cout, std::cerr); }

}  // namespace rpg
