#include "rpg/training.hpp"

#include "rpg/config.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace rpg {

void TrainConfig::validate() const {
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(beta >= 0)) throw std::invalid_argument("beta must be >= 0");
  if (!(kl_warmup_fraction >= 0 && kl_warmup_fraction <= 1))
    throw std::invalid_argument("kl_warmup_fraction must lie in [0, 1]");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (save_every < 0) throw std::invalid_argument("save_every must be >= 0");
  if (!(adamw.beta1 >= 0 && adamw.beta1 < 1)) throw std::invalid_argument("adamw.beta1 must lie in [0, 1)");
  if (!(adamw.beta2 >= 0 && adamw.beta2 < 1)) throw std::invalid_argument("adamw.beta2 must lie in [0, 1)");
  if (!(adamw.epsilon > 0)) throw std::invalid_argument("adamw.epsilon must be > 0");
  if (!(adamw.weight_decay >= 0)) throw std::invalid_argument("adamw.weight_decay must be >= 0");
}

namespace {

template <typename Scalar>
std::vector<MatrixX<Scalar>*> flatten(Parameters<Scalar>& p) {
  std::vector<MatrixX<Scalar>*> out;
  p.visit([&](const std::string&, MatrixX<Scalar>& m) { out.push_back(&m); });
  return out;
}

template <typename Scalar>
std::vector<const MatrixX<Scalar>*> flatten(const Parameters<Scalar>& p) {
  std::vector<const MatrixX<Scalar>*> out;
  p.visit([&](const std::string&, const MatrixX<Scalar>& m) { out.push_back(&m); });
  return out;
}

}  // namespace

template <typename Scalar>
void adamw_step(Parameters<Scalar>& params, const Parameters<Scalar>& grads,
                OptimizerState<Scalar>& state, const AdamWConfig& config, double learning_rate) {
  auto p = flatten(params);
  auto g = flatten(grads);
  auto m = flatten(state.first_moment);
  auto v = flatten(state.second_moment);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw std::invalid_argument("adamw_step: parameter tree mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols() ||
        m[i]->rows() != p[i]->rows() || m[i]->cols() != p[i]->cols() ||
        v[i]->rows() != p[i]->rows() || v[i]->cols() != p[i]->cols()) {
      throw std::invalid_argument("adamw_step: shape mismatch at tensor " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(config.beta1);
  const Scalar b2 = static_cast<Scalar>(config.beta2);
  const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(config.beta1, t));
  const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(config.beta2, t));
  const Scalar lr = static_cast<Scalar>(learning_rate);
  const Scalar eps = static_cast<Scalar>(config.epsilon);
  const Scalar decay = static_cast<Scalar>(learning_rate * config.weight_decay);

  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pa = p[i]->array();
    const auto ga = g[i]->array();
    auto ma = m[i]->array();
    auto va = v[i]->array();
    ma = b1 * ma + (Scalar(1) - b1) * ga;
    va = b2 * va + (Scalar(1) - b2) * ga.square();
    pa = pa - lr * (ma / bc1) / ((va / bc2).sqrt() + eps) - decay * pa;
  }
}

template <typename Scalar>
ExampleLoss<Scalar> example_loss_graph(const ParameterVars<Scalar>& params,
                                       const Points3<Scalar>& cloud, const GeneratorConfig& gen,
                                       double lambda, double beta, const VectorX<Scalar>* noise) {
  ad::Tape<Scalar>& tape = *params.point_proj.tape();
  const ad::Var<Scalar> target = tape.constant(cloud);
  const EncoderVars<Scalar> enc = encode_graph(params, target, gen);

  ad::Var<Scalar> latent = enc.mean;
  if (gen.vae_mode && noise != nullptr) {
    latent = enc.mean + ad::exp(ad::scale(enc.log_variance, 0.5)) * tape.constant(*noise);
  }
  const auto stages = generate_graph(params, latent, gen);
  const ad::Var<Scalar> output = stages.back().points;

  // Correspondences are held fixed; the loss is differentiated through the
  // matched pairs of both directions.
  const ChamferResult<Scalar> matches = chamfer_distance<Scalar>(cloud, output.value());
  std::vector<Eigen::Index> p_idx(matches.p_matches.size());
  std::vector<Eigen::Index> q_idx(matches.q_matches.size());
  for (std::size_t i = 0; i < p_idx.size(); ++i) p_idx[i] = matches.p_matches[i].index;
  for (std::size_t j = 0; j < q_idx.size(); ++j) q_idx[j] = matches.q_matches[j].index;

  const ad::Var<Scalar> forward_term =
      ad::scale(ad::sum(ad::square(ad::gather_cols(output, p_idx) - target)),
                1.0 / static_cast<double>(cloud.cols()));
  const ad::Var<Scalar> backward_term =
      ad::scale(ad::sum(ad::square(output - ad::gather_cols(target, q_idx))),
                1.0 / static_cast<double>(output.cols()));
  const ad::Var<Scalar> cd = forward_term + backward_term;

  ad::Var<Scalar> reg_sum = ad::mean(stages[1].scales);
  for (std::size_t d = 2; d < stages.size(); ++d) reg_sum = reg_sum + ad::mean(stages[d].scales);
  const ad::Var<Scalar> reg = ad::scale(reg_sum, 1.0 / static_cast<double>(gen.stages()));

  ad::Var<Scalar> total = cd + ad::scale(reg, lambda);
  ExampleLoss<Scalar> out;
  if (gen.vae_mode) {
    // 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
    const ad::Var<Scalar> kl_terms = ad::sum(ad::square(enc.mean)) +
                                     ad::sum(ad::exp(enc.log_variance)) -
                                     ad::sum(enc.log_variance);
    const ad::Var<Scalar> kl = ad::scale(
        kl_terms - tape.constant(MatrixX<Scalar>::Constant(1, 1, static_cast<Scalar>(gen.latent_width))),
        0.5);
    total = total + ad::scale(kl, beta);
    out.parts.kl = static_cast<double>(kl.value()(0, 0));
  }
  out.total = total;
  out.parts.cd = static_cast<double>(cd.value()(0, 0));
  out.parts.reg = static_cast<double>(reg.value()(0, 0));
  out.parts.total = static_cast<double>(total.value()(0, 0));
  return out;
}

namespace {

template <typename Scalar>
void check_batch(const std::vector<Points3<Scalar>>& batch, const std::vector<VectorX<Scalar>>& noise) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (!noise.empty() && noise.size() != batch.size())
    throw std::invalid_argument("total_loss: need one noise vector per cloud");
}

template <typename Scalar>
const VectorX<Scalar>* noise_at(const std::vector<VectorX<Scalar>>& noise, std::size_t i) {
  return noise.empty() ? nullptr : &noise[i];
}

template <typename Scalar>
LossAndGradient<Scalar> single_example(const Parameters<Scalar>& params, const Points3<Scalar>& cloud,
                                       const GeneratorConfig& gen, double lambda, double beta,
                                       const VectorX<Scalar>* noise) {
  ad::Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, true);
  const ExampleLoss<Scalar> ex = example_loss_graph(vars, cloud, gen, lambda, beta, noise);
  const auto grads = tape.backward(ex.total);
  return {ex.parts, collect_gradients(grads, vars)};
}

void add_components(LossComponents& acc, const LossComponents& x) {
  acc.cd += x.cd;
  acc.reg += x.reg;
  acc.kl += x.kl;
  acc.total += x.total;
}

void scale_components(LossComponents& acc, double s) {
  acc.cd *= s;
  acc.reg *= s;
  acc.kl *= s;
  acc.total *= s;
}

template <typename Scalar>
void add_into(Parameters<Scalar>& acc, const Parameters<Scalar>& x) {
  auto a = flatten(acc);
  auto b = flatten(x);
  for (std::size_t i = 0; i < a.size(); ++i) *a[i] += *b[i];
}

template <typename Scalar>
void scale_into(Parameters<Scalar>& acc, Scalar s) {
  for (auto* m : flatten(acc)) *m *= s;
}

// Per-example gradients computed `threads` at a time, then summed in example
// order so the result does not depend on the thread count.
template <typename Scalar>
LossAndGradient<Scalar> batch_gradient(const Parameters<Scalar>& params,
                                       const std::vector<const Points3<Scalar>*>& clouds,
                                       const std::vector<const VectorX<Scalar>*>& noise,
                                       const GeneratorConfig& gen, double lambda, double beta,
                                       int threads) {
  LossAndGradient<Scalar> acc;
  acc.gradient = params.map([](const std::string&, const MatrixX<Scalar>& m) -> MatrixX<Scalar> {
    return MatrixX<Scalar>::Zero(m.rows(), m.cols());
  });
  const std::size_t n = clouds.size();
  const std::size_t wave = static_cast<std::size_t>(std::max(1, threads));
  std::vector<LossAndGradient<Scalar>> results(std::min(wave, n));
  for (std::size_t start = 0; start < n; start += wave) {
    const std::size_t count = std::min(wave, n - start);
    auto work = [&](std::size_t j) {
      results[j] = single_example(params, *clouds[start + j], gen, lambda, beta, noise[start + j]);
    };
    if (count == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t j = 1; j < count; ++j) pool.emplace_back(work, j);
      work(0);
      for (auto& t : pool) t.join();
    }
    for (std::size_t j = 0; j < count; ++j) {
      add_components(acc.loss, results[j].loss);
      add_into(acc.gradient, results[j].gradient);
    }
  }
  scale_components(acc.loss, 1.0 / static_cast<double>(n));
  scale_into(acc.gradient, static_cast<Scalar>(1.0 / static_cast<double>(n)));
  return acc;
}

}  // namespace

template <typename Scalar>
LossComponents total_loss(const Parameters<Scalar>& params, const std::vector<Points3<Scalar>>& batch,
                          const GeneratorConfig& gen, const TrainConfig& train,
                          const std::vector<VectorX<Scalar>>& noise) {
  check_batch(batch, noise);
  LossComponents acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Tape<Scalar> tape;
    const auto vars = bind_parameters(tape, params, false);
    add_components(acc, example_loss_graph(vars, batch[i], gen, train.lambda, train.beta,
                                           noise_at(noise, i))
                            .parts);
  }
  scale_components(acc, 1.0 / static_cast<double>(batch.size()));
  return acc;
}

template <typename Scalar>
LossAndGradient<Scalar> total_loss_with_gradient(const Parameters<Scalar>& params,
                                                 const std::vector<Points3<Scalar>>& batch,
                                                 const GeneratorConfig& gen,
                                                 const TrainConfig& train,
                                                 const std::vector<VectorX<Scalar>>& noise) {
  check_batch(batch, noise);
  std::vector<const Points3<Scalar>*> clouds;
  std::vector<const VectorX<Scalar>*> eta;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    clouds.push_back(&batch[i]);
    eta.push_back(noise_at(noise, i));
  }
  return batch_gradient(params, clouds, eta, gen, train.lambda, train.beta, 1);
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,cd,reg,kl,total\n";
  os << std::setprecision(17);
  for (const auto& e : log) {
    os << e.epoch << ',' << e.mean.cd << ',' << e.mean.reg << ',' << e.mean.kl << ','
       << e.mean.total << '\n';
  }
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string epoch_checkpoint_name(int epoch) {
  std::ostringstream os;
  os << "checkpoint_epoch_" << std::setw(5) << std::setfill('0') << epoch << ".rpgk";
  return os.str();
}

}  // namespace

template <typename Scalar>
FitResult<Scalar> fit(const std::vector<PointCloud>& dataset, const GeneratorConfig& gen,
                      const TrainConfig& train, const FitOptions& options) {
  gen.validate();
  train.validate();
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");
  std::vector<Points3<Scalar>> clouds;
  clouds.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].normalized)
      throw std::invalid_argument("fit: cloud " + std::to_string(i) + " is not normalized");
    clouds.push_back(dataset[i].points.cast<Scalar>());
  }
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  FitResult<Scalar> result;
  result.params = init_parameters<Scalar>(gen, train.seed);
  result.optimizer = init_optimizer(result.params);

  std::mt19937_64 rng(train.seed ^ 0x5eed5eed5eedULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(clouds.size());
  const std::size_t batch_size = static_cast<std::size_t>(train.batch_size);
  const double warmup_epochs = train.kl_warmup_fraction * train.epochs;

  auto save = [&](const std::filesystem::path& path) {
    Checkpoint ck{gen, train, cast_parameters<float>(result.params),
                  {cast_parameters<float>(result.optimizer.first_moment),
                   cast_parameters<float>(result.optimizer.second_moment), result.optimizer.step}};
    save_checkpoint(ck, path);
    write_text(options.out_dir / "train_log.csv", format_log_csv(result.log));
  };

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double beta = train.beta;
    if (gen.vae_mode && warmup_epochs > 0)
      beta = train.beta * std::min(1.0, static_cast<double>(epoch + 1) / warmup_epochs);

    LossComponents epoch_sum;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_index) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      std::vector<const Points3<Scalar>*> batch;
      std::vector<VectorX<Scalar>> noise(gen.vae_mode ? count : 0);
      std::vector<const VectorX<Scalar>*> eta(count, nullptr);
      for (std::size_t j = 0; j < count; ++j) {
        batch.push_back(&clouds[order[start + j]]);
        if (!batch.back()->allFinite()) {
          std::ostringstream os;
          os << "non-finite input at epoch " << epoch + 1 << ", batch " << batch_index << " (cloud "
             << order[start + j] << ")";
          throw TrainingError(os.str());
        }
        if (gen.vae_mode) {
          noise[j].resize(gen.latent_width);
          for (Eigen::Index u = 0; u < gen.latent_width; ++u) noise[j](u) = static_cast<Scalar>(normal(rng));
          eta[j] = &noise[j];
        }
      }
      const LossAndGradient<Scalar> step =
          batch_gradient(result.params, batch, eta, gen, train.lambda, beta, options.threads);
      if (!std::isfinite(step.loss.total)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch + 1 << ", batch " << batch_index << " (cd "
           << step.loss.cd << ", reg " << step.loss.reg << ", kl " << step.loss.kl << ")";
        throw TrainingError(os.str());
      }
      adamw_step(result.params, step.gradient, result.optimizer, train.adamw, train.learning_rate);
      LossComponents weighted = step.loss;
      scale_components(weighted, static_cast<double>(count));
      add_components(epoch_sum, weighted);
    }
    scale_components(epoch_sum, 1.0 / static_cast<double>(clouds.size()));
    result.log.push_back({epoch + 1, epoch_sum});
    if (options.on_epoch) options.on_epoch(result.log.back());
    if (!options.out_dir.empty() && train.save_every > 0 && (epoch + 1) % train.save_every == 0)
      save(options.out_dir / epoch_checkpoint_name(epoch + 1));
  }
  if (!options.out_dir.empty()) save(options.out_dir / "final.rpgk");
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'P', 'G', 'K'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_floats(std::vector<char>& out, const MatrixX<float>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
}

struct TensorSlot {
  std::string name;
  MatrixX<float>* tensor;
};

std::vector<TensorSlot> checkpoint_slots(Checkpoint& ck) {
  std::vector<TensorSlot> slots;
  ck.params.visit([&](const std::string& n, MatrixX<float>& m) { slots.push_back({"param/" + n, &m}); });
  ck.optimizer.first_moment.visit(
      [&](const std::string& n, MatrixX<float>& m) { slots.push_back({"adam_m/" + n, &m}); });
  ck.optimizer.second_moment.visit(
      [&](const std::string& n, MatrixX<float>& m) { slots.push_back({"adam_v/" + n, &m}); });
  return slots;
}

}  // namespace

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
  Checkpoint copy = ckpt;
  auto slots = checkpoint_slots(copy);
  nlohmann::json header;
  header["format"] = "rpg-checkpoint";
  header["generator"] = ckpt.generator;
  header["train"] = ckpt.train;
  header["step"] = ckpt.optimizer.step;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& s : slots) {
    manifest.push_back({{"name", s.name},
                        {"shape", {s.tensor->rows(), s.tensor->cols()}},
                        {"offset", offset}});
    offset += 4u * static_cast<std::uint64_t>(s.tensor->size());
  }
  header["tensors"] = manifest;
  const std::string text = header.dump();

  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& s : slots) put_floats(out, *s.tensor);
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic (expected RPGK)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: version mismatch (file " + std::to_string(version) +
                          ", supported " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() < 12ull + header_len) throw CheckpointError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::size_t payload = 12ull + header_len;

  Checkpoint ck;
  try {
    ck.generator = header.at("generator").get<GeneratorConfig>();
    ck.train = header.at("train").get<TrainConfig>();
    ck.optimizer.step = header.at("step").get<std::int64_t>();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
  }
  ck.params = zero_parameters<float>(ck.generator);
  ck.optimizer.first_moment = zero_parameters<float>(ck.generator);
  ck.optimizer.second_moment = zero_parameters<float>(ck.generator);

  std::map<std::string, MatrixX<float>*> by_name;
  for (auto& s : checkpoint_slots(ck)) by_name[s.name] = s.tensor;
  const auto& manifest = header.at("tensors");
  if (manifest.size() != by_name.size()) {
    throw CheckpointError("checkpoint: manifest lists " + std::to_string(manifest.size()) +
                          " tensors, configuration implies " + std::to_string(by_name.size()));
  }
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: unexpected tensor " + name);
    MatrixX<float>& m = *it->second;
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols()) {
      throw CheckpointError("checkpoint: shape mismatch for " + name + ": file " +
                            ad::detail::shape_str(rows, cols) + ", configuration " +
                            ad::detail::shape_str(m.rows(), m.cols()));
    }
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t len = 4u * static_cast<std::uint64_t>(m.size());
    if (payload + offset + len > bytes.size()) throw CheckpointError("checkpoint: truncated payload at " + name);
    const char* src = bytes.data() + payload + offset;
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::bit_cast<float>(get_u32(src + 4 * i));
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<char> bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const GeneratorConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const Parameters<float> want = zero_parameters<float>(expected);
  std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> have;
  ck.params.visit([&](const std::string& n, const MatrixX<float>& m) { have[n] = {m.rows(), m.cols()}; });
  want.visit([&](const std::string& n, const MatrixX<float>& m) {
    const auto it = have.find(n);
    if (it == have.end()) throw CheckpointError("checkpoint: missing tensor " + n);
    if (it->second.first != m.rows() || it->second.second != m.cols()) {
      throw CheckpointError("checkpoint: shape mismatch for " + n + ": file " +
                            ad::detail::shape_str(it->second.first, it->second.second) +
                            ", configuration " + ad::detail::shape_str(m.rows(), m.cols()));
    }
  });
  std::size_t expected_count = 0;
  want.visit([&](const std::string&, const MatrixX<float>&) { ++expected_count; });
  if (expected_count != have.size()) {
    throw CheckpointError("checkpoint: file has " + std::to_string(have.size()) +
                          " tensors, configuration expects " + std::to_string(expected_count));
  }
  return ck;
}

#define RPG_INSTANTIATE_TRAINING(S)                                                               \
  template void adamw_step<S>(Parameters<S>&, const Parameters<S>&, OptimizerState<S>&,            \
                              const AdamWConfig&, double);                                          \
  template ExampleLoss<S> example_loss_graph<S>(const ParameterVars<S>&, const Points3<S>&,         \
                                                const GeneratorConfig&, double, double,             \
                                                const VectorX<S>*);                                 \
  template LossComponents total_loss<S>(const Parameters<S>&, const std::vector<Points3<S>>&,       \
                                        const GeneratorConfig&, const TrainConfig&,                 \
                                        const std::vector<VectorX<S>>&);                            \
  template LossAndGradient<S> total_loss_with_gradient<S>(                                          \
      const Parameters<S>&, const std::vector<Points3<S>>&, const GeneratorConfig&,                 \
      const TrainConfig&, const std::vector<VectorX<S>>&);                                          \
  template FitResult<S> fit<S>(const std::vector<PointCloud>&, const GeneratorConfig&,              \
                               const TrainConfig&, const FitOptions&);

RPG_INSTANTIATE_TRAINING(float)
RPG_INSTANTIATE_TRAINING(double)

#undef RPG_INSTANTIATE_TRAINING

}  // namespace rpg
