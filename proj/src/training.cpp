#include "mhflow/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>

#include "mhflow/check.hpp"
#include "mhflow/mh.hpp"

namespace mhflow::train {

namespace {

using json = nlohmann::json;

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_jsonl(std::FILE* f, const MetricsRecord& m) {
  std::fprintf(f, "{\"iter\":%zu,\"loss\":%.17g,\"loss_kind\":\"%s\"", m.iter,
               m.loss, m.loss_kind.c_str());
  auto opt = [&](const char* key, double v) {
    if (std::isfinite(v)) std::fprintf(f, ",\"%s\":%.17g", key, v);
  };
  opt("ar_window", m.ar_window);
  opt("arlb_est", m.arlb_est);
  opt("disc_loss", m.disc_loss);
  opt("disc_acc", m.disc_acc);
  opt("ratio_mae", m.ratio_mae);
  std::fprintf(f, ",\"wall_s\":%.17g}\n", m.wall_s);
}

// Coarse histogram check of the learned log-ratio: bin generated samples
// on the target's box, compare the discriminator's logit at occupied cell
// centers against log p - log q_hist. Diagnostic only.
double ratio_mae_hist(const nets::GeneratorNet& gen,
                      const nets::DiscriminatorNet& disc,
                      const targets::TargetDensity& t, Rng& rng) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (t.dim != 2 || t.grid.dims() != 2) return nan;
  const std::size_t bins = 40, n_draw = 4000;
  Mat s = gen.generate(n_draw, rng);
  double lo0 = t.grid.lo[0], hi0 = t.grid.hi[0];
  double lo1 = t.grid.lo[1], hi1 = t.grid.hi[1];
  double w0 = (hi0 - lo0) / double(bins), w1 = (hi1 - lo1) / double(bins);
  std::vector<std::size_t> count(bins * bins, 0);
  for (std::size_t i = 0; i < n_draw; ++i) {
    double x = s(i, 0), y = s(i, 1);
    if (x < lo0 || x >= hi0 || y < lo1 || y >= hi1) continue;
    std::size_t b0 = std::size_t((x - lo0) / w0);
    std::size_t b1 = std::size_t((y - lo1) / w1);
    ++count[b0 * bins + b1];
  }
  std::vector<double> lp(bins * bins);
  double z_target = 0;
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t j = 0; j < bins; ++j) {
      double c[2] = {lo0 + (double(i) + 0.5) * w0,
                     lo1 + (double(j) + 0.5) * w1};
      lp[i * bins + j] = t.log_unnorm(c);
      z_target += std::exp(lp[i * bins + j]) * w0 * w1;
    }
  double log_z = std::log(z_target);
  double mae = 0, mass = 0;
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t j = 0; j < bins; ++j) {
      std::size_t c = count[i * bins + j];
      if (c < 5) continue;
      double lq = std::log(double(c)) - std::log(double(n_draw) * w0 * w1);
      double center[2] = {lo0 + (double(i) + 0.5) * w0,
                          lo1 + (double(j) + 0.5) * w1};
      double target_ratio = (lp[i * bins + j] - log_z) - lq;
      double weight = double(c);
      mae += weight * std::abs(disc.logit(center) - target_ratio);
      mass += weight;
    }
  return mass > 0 ? mae / mass : nan;
}

}  // namespace

SampleBuffer::SampleBuffer(std::size_t dim, std::size_t capacity)
    : dim_(dim), cap_(capacity) {
  check(dim_ > 0 && cap_ > 0, "SampleBuffer: dim and capacity must be positive");
  rows_.reserve(std::min(cap_, std::size_t(4096)) * dim_);
}

bool SampleBuffer::push(const double* x, std::int64_t tag) {
  bool same = !last_.empty() &&
              std::equal(last_.begin(), last_.end(), x,
                         [](double a, double b) { return a == b; });
  if (same) {
    if (consecutive_ >= 8) return false;
    ++consecutive_;
  } else {
    last_.assign(x, x + dim_);
    consecutive_ = 1;
  }
  if (fill_ < cap_) {
    rows_.insert(rows_.end(), x, x + dim_);
    tags_.push_back(tag);
    ++fill_;
  } else {
    std::copy(x, x + dim_, rows_.begin() + std::ptrdiff_t(head_ * dim_));
    tags_[head_] = tag;
    head_ = (head_ + 1) % cap_;
  }
  return true;
}

Mat SampleBuffer::sample(std::size_t k, Rng& rng,
                         std::vector<std::int64_t>* tags) const {
  check(fill_ >= k, "SampleBuffer: fewer stored states than requested");
  std::vector<std::size_t> idx(fill_);
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  Mat out(k, dim_);
  if (tags) tags->resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t pick = j + rng.index(fill_ - j);
    std::swap(idx[j], idx[pick]);
    const double* src = row(idx[j]);
    std::copy(src, src + dim_, out.row_ptr(j));
    if (tags) (*tags)[j] = tags_[idx[j]];
  }
  return out;
}

void SampleBuffer::serialize(std::vector<double>& out) const {
  out.push_back(double(dim_));
  out.push_back(double(cap_));
  out.push_back(double(fill_));
  out.push_back(double(head_));
  out.push_back(double(consecutive_));
  out.push_back(last_.empty() ? 0.0 : 1.0);
  out.insert(out.end(), last_.begin(), last_.end());
  for (std::size_t i = 0; i < fill_; ++i) out.push_back(double(tags_[i]));
  out.insert(out.end(), rows_.begin(), rows_.begin() + std::ptrdiff_t(fill_ * dim_));
}

std::size_t SampleBuffer::deserialize(const double* data, std::size_t len) {
  check(len >= 6, "SampleBuffer: serialized block too short");
  std::size_t off = 0;
  check(std::size_t(data[off]) == dim_ && std::size_t(data[off + 1]) == cap_,
        "SampleBuffer: serialized shape mismatch");
  off += 2;
  fill_ = std::size_t(data[off++]);
  head_ = std::size_t(data[off++]);
  consecutive_ = std::size_t(data[off++]);
  bool has_last = data[off++] != 0.0;
  last_.clear();
  if (has_last) {
    check(off + dim_ <= len, "SampleBuffer: serialized block truncated");
    last_.assign(data + off, data + off + dim_);
    off += dim_;
  }
  check(off + fill_ * (dim_ + 1) <= len, "SampleBuffer: serialized block truncated");
  tags_.resize(fill_);
  for (std::size_t i = 0; i < fill_; ++i)
    tags_[i] = std::int64_t(data[off++]);
  rows_.assign(data + off, data + off + fill_ * dim_);
  off += fill_ * dim_;
  return off;
}

void checkpoint_save(const std::string& path, const CheckpointMeta& meta,
                     const ParamVector& params, const ad::AdamState& opt,
                     const std::vector<double>& extra) {
  json j;
  j["version"] = meta.version;
  j["kind"] = meta.kind;
  j["dim"] = meta.dim;
  j["seed"] = meta.seed;
  j["iter"] = meta.iter;
  j["loss_kind"] = meta.loss_kind;
  j["arch"] = json(meta.arch);
  j["param_count"] = params.flat().size();
  json views = json::array();
  for (const ParamView& v : params.views())
    views.push_back(json::array({v.name, v.rows, v.cols}));
  j["views"] = views;
  j["adam_t"] = opt.t;
  j["extra_count"] = extra.size();
  std::string header = j.dump();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  check(f != nullptr, "checkpoint_save: cannot open " + path);
  std::fwrite(header.data(), 1, header.size(), f);
  std::fputc('\n', f);
  auto write_block = [&](const double* p, std::size_t n) {
    if (n) std::fwrite(p, sizeof(double), n, f);
  };
  std::size_t n = params.flat().size();
  write_block(params.flat().data(), n);
  if (opt.m.empty()) {
    std::vector<double> zeros(n, 0.0);
    write_block(zeros.data(), n);
    write_block(zeros.data(), n);
  } else {
    check(opt.m.size() == n && opt.v.size() == n,
          "checkpoint_save: optimizer state size mismatch");
    write_block(opt.m.data(), n);
    write_block(opt.v.data(), n);
  }
  write_block(extra.data(), extra.size());
  std::fclose(f);
}

CheckpointMeta checkpoint_load(const std::string& path, ParamVector& params,
                               ad::AdamState& opt,
                               std::vector<double>* extra) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check(f != nullptr, "checkpoint_load: cannot open " + path);
  std::string header;
  for (int c = std::fgetc(f); c != EOF && c != '\n'; c = std::fgetc(f))
    header.push_back(char(c));
  json j;
  try {
    j = json::parse(header);
  } catch (const std::exception&) {
    std::fclose(f);
    throw Error("checkpoint_load: corrupt header in " + path);
  }
  CheckpointMeta meta;
  meta.version = j.at("version").get<int>();
  if (meta.version != 1) {
    std::fclose(f);
    throw Error("checkpoint_load: unsupported version " +
                std::to_string(meta.version));
  }
  meta.kind = j.at("kind").get<std::string>();
  meta.dim = j.at("dim").get<std::size_t>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.iter = j.at("iter").get<std::size_t>();
  meta.loss_kind = j.at("loss_kind").get<std::string>();
  meta.arch = j.at("arch").get<std::map<std::string, double>>();
  std::size_t n = j.at("param_count").get<std::size_t>();
  const json& views = j.at("views");
  bool shape_ok = n == params.flat().size() &&
                  views.size() == params.views().size();
  if (shape_ok) {
    for (std::size_t i = 0; i < views.size(); ++i) {
      const ParamView& v = params.views()[i];
      shape_ok = shape_ok && views[i][0].get<std::string>() == v.name &&
                 views[i][1].get<std::size_t>() == v.rows &&
                 views[i][2].get<std::size_t>() == v.cols;
    }
  }
  if (!shape_ok) {
    std::fclose(f);
    throw Error("checkpoint_load: parameter shapes in " + path +
                " do not match the model being loaded");
  }
  auto read_block = [&](double* p, std::size_t count) {
    std::size_t got = std::fread(p, sizeof(double), count, f);
    if (got != count) {
      std::fclose(f);
      throw Error("checkpoint_load: truncated file " + path);
    }
  };
  read_block(params.flat().data(), n);
  opt.m.resize(n);
  opt.v.resize(n);
  read_block(opt.m.data(), n);
  read_block(opt.v.data(), n);
  opt.t = j.at("adam_t").get<std::int64_t>();
  std::size_t extra_count = j.at("extra_count").get<std::size_t>();
  std::vector<double> tmp(extra_count);
  if (extra_count) read_block(tmp.data(), extra_count);
  if (extra) *extra = std::move(tmp);
  std::fclose(f);
  return meta;
}

CheckpointMeta checkpoint_peek(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check(f != nullptr, "checkpoint_peek: cannot open " + path);
  std::string header;
  for (int c = std::fgetc(f); c != EOF && c != '\n'; c = std::fgetc(f))
    header.push_back(char(c));
  std::fclose(f);
  CheckpointMeta meta;
  try {
    json j = json::parse(header);
    meta.version = j.at("version").get<int>();
    check(meta.version == 1, "checkpoint_peek: unsupported version " +
                                 std::to_string(meta.version));
    meta.kind = j.at("kind").get<std::string>();
    meta.dim = j.at("dim").get<std::size_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.iter = j.at("iter").get<std::size_t>();
    meta.loss_kind = j.at("loss_kind").get<std::string>();
    meta.arch = j.at("arch").get<std::map<std::string, double>>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error("checkpoint_peek: corrupt header in " + path);
  }
  return meta;
}

TrainResult train_density_based(const targets::TargetDensity& target,
                                flows::FlowProposal& flow,
                                const TrainConfig& cfg,
                                const std::string& resume_from) {
  check(cfg.iterations > 0 && cfg.batch > 0 && cfg.buffer_refresh > 0 &&
            cfg.eval_every > 0 && cfg.lr > 0,
        "train_density_based: config fields must be positive");
  check(target.dim == flow.config().dim,
        "train_density_based: target and proposal dimension mismatch");
  const std::size_t dim = target.dim;
  const std::size_t kWindow = 256;

  SampleBuffer buf(dim, cfg.buffer_capacity);
  ad::AdamState adam;
  std::vector<double> window;
  std::size_t start_iter = 0;
  double wall_accum = 0;

  mh::ExplicitProposal prop = mh::ExplicitProposal::from_flow(flow);
  mh::IndependentSampler sampler(target, prop);

  if (resume_from.empty()) {
    Rng rng0(mix64(cfg.seed, 0));
    sampler.init_state(rng0);
    for (std::size_t b = 0; b < cfg.burn_in; ++b) sampler.step(rng0);
  } else {
    std::vector<double> extra;
    CheckpointMeta meta =
        checkpoint_load(resume_from, flow.params(), adam, &extra);
    check(meta.kind == "flow", "train_density_based: checkpoint is not a flow");
    check(meta.dim == dim, "train_density_based: checkpoint dimension mismatch");
    check(meta.loss_kind == objectives::to_string(cfg.loss),
          "train_density_based: checkpoint was trained on a different loss");
    std::size_t off = 0;
    check(extra.size() >= dim + 3, "train_density_based: checkpoint lacks state");
    start_iter = std::size_t(extra[off++]);
    wall_accum = extra[off++];
    std::vector<double> chain_x(extra.begin() + std::ptrdiff_t(off),
                                extra.begin() + std::ptrdiff_t(off + dim));
    off += dim;
    std::size_t wn = std::size_t(extra[off++]);
    window.assign(extra.begin() + std::ptrdiff_t(off),
                  extra.begin() + std::ptrdiff_t(off + wn));
    off += wn;
    off += buf.deserialize(extra.data() + off, extra.size() - off);
    check(off == extra.size(), "train_density_based: checkpoint state trailing bytes");
    sampler.set_state(chain_x.data());
  }
  check(start_iter < cfg.iterations,
        "train_density_based: checkpoint already covers the requested iterations");

  std::FILE* mf = nullptr;
  if (!cfg.metrics_path.empty()) {
    mf = std::fopen(cfg.metrics_path.c_str(), start_iter == 0 ? "w" : "a");
    check(mf != nullptr,
          "train_density_based: cannot open " + cfg.metrics_path);
  }

  auto save_state = [&](std::size_t next_iter) {
    std::vector<double> extra;
    extra.push_back(double(next_iter));
    extra.push_back(wall_accum);
    const std::vector<double>& x = sampler.state();
    extra.insert(extra.end(), x.begin(), x.end());
    extra.push_back(double(window.size()));
    extra.insert(extra.end(), window.begin(), window.end());
    buf.serialize(extra);
    CheckpointMeta meta;
    meta.kind = "flow";
    meta.dim = dim;
    meta.seed = cfg.seed;
    meta.iter = next_iter;
    meta.loss_kind = objectives::to_string(cfg.loss);
    meta.arch = {{"n_layers", double(flow.config().n_layers)},
                 {"hidden", double(flow.config().hidden)},
                 {"s_clamp", flow.config().s_clamp}};
    checkpoint_save(cfg.checkpoint_path, meta, flow.params(), adam, extra);
  };

  TrainResult res;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t iter = start_iter; iter < cfg.iterations; ++iter) {
    Rng rng(mix64(cfg.seed, iter + 1));
    // the Adam step invalidated the sampler's cached density values
    std::vector<double> cur = sampler.state();
    sampler.set_state(cur.data());

    auto extend = [&](std::size_t steps) {
      for (std::size_t s = 0; s < steps; ++s) {
        bool acc = sampler.step(rng);
        window.push_back(acc ? 1.0 : 0.0);
        if (window.size() > kWindow) window.erase(window.begin());
        buf.push(sampler.state().data(), std::int64_t(iter));
      }
    };
    extend(cfg.buffer_refresh);
    for (std::size_t tries = 0; buf.fill() < cfg.batch && tries < 16; ++tries)
      extend(cfg.buffer_refresh);

    Mat z(cfg.batch, dim);
    for (double& v : z.data) v = rng.normal();
    Mat xb(cfg.batch, dim);
    if (buf.fill() >= cfg.batch) {
      xb = buf.sample(cfg.batch, rng);
    } else {
      Mat got = buf.sample(buf.fill(), rng);
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        const double* src = got.row_ptr(i % got.rows);
        std::copy(src, src + dim, xb.row_ptr(i));
      }
    }
    GradRecord g = ad::value_and_grad(
        [&](ad::Tape& t, const ParamVector& pv) {
          return objectives::build_flow_loss(t, cfg.loss, target, flow, pv, z,
                                             xb);
        },
        flow.params());
    ad::adam_step(flow.params(), g.grad, adam, {cfg.lr, 0.9, 0.999, 1e-8});
    res.final_loss = g.loss;

    bool last = iter + 1 == cfg.iterations;
    if ((iter + 1) % cfg.eval_every == 0 || last) {
      MetricsRecord m;
      m.iter = iter + 1;
      m.loss = g.loss;
      m.loss_kind = objectives::to_string(cfg.loss);
      m.ar_window =
          std::accumulate(window.begin(), window.end(), 0.0) /
          double(window.size());
      double arlb_loss = g.loss;
      if (cfg.loss != objectives::LossKind::ARLB) {
        Mat z2(cfg.batch, dim);
        for (double& v : z2.data) v = rng.normal();
        Mat x2 = buf.sample(cfg.batch, rng);
        arlb_loss = objectives::eval_flow_loss(objectives::LossKind::ARLB,
                                               target, flow, z2, x2);
      }
      m.arlb_est = 1.0 - std::sqrt(std::max(0.0, arlb_loss) / 2.0);
      m.wall_s = wall_accum + elapsed_s(t0);
      res.metrics.push_back(m);
      if (mf) write_jsonl(mf, m);
    }
    if (!cfg.checkpoint_path.empty() &&
        ((cfg.checkpoint_every != 0 &&
          (iter + 1) % cfg.checkpoint_every == 0) ||
         last)) {
      wall_accum += elapsed_s(t0);
      t0 = std::chrono::steady_clock::now();
      save_state(iter + 1);
    }
  }
  res.iterations_run = cfg.iterations - start_iter;
  if (mf) std::fclose(mf);
  return res;
}

TrainResult train_sample_based(const Mat& data, nets::GeneratorNet& gen,
                               nets::DiscriminatorNet& disc,
                               const TrainConfig& cfg,
                               const targets::TargetDensity* eval_target,
                               const std::string& resume_from) {
  check(cfg.iterations > 0 && cfg.batch > 0 && cfg.k_d > 0 &&
            cfg.eval_every > 0 && cfg.lr > 0,
        "train_sample_based: config fields must be positive");
  check(data.rows >= cfg.batch,
        "train_sample_based: need at least one batch of data");
  const std::size_t dim = gen.config().out_dim;
  check(data.cols == dim && disc.config().in_dim == dim,
        "train_sample_based: data, generator and discriminator dimensions differ");
  check(cfg.loss != objectives::LossKind::VI,
        "train_sample_based: loss must be ar or arlb");

  ad::AdamState adam_g, adam_d;
  std::size_t start_iter = 0;
  double wall_accum = 0;
  if (!resume_from.empty()) {
    std::vector<double> extra;
    CheckpointMeta mg = checkpoint_load(resume_from + ".gen", gen.params(),
                                        adam_g, &extra);
    CheckpointMeta md =
        checkpoint_load(resume_from + ".disc", disc.params(), adam_d, nullptr);
    check(mg.kind == "generator" && md.kind == "discriminator",
          "train_sample_based: checkpoint kinds do not match");
    check(mg.dim == dim && md.dim == dim,
          "train_sample_based: checkpoint dimension mismatch");
    check(extra.size() == 2, "train_sample_based: checkpoint lacks state");
    start_iter = std::size_t(extra[0]);
    wall_accum = extra[1];
  }
  check(start_iter < cfg.iterations,
        "train_sample_based: checkpoint already covers the requested iterations");

  std::FILE* mf = nullptr;
  if (!cfg.metrics_path.empty()) {
    mf = std::fopen(cfg.metrics_path.c_str(), start_iter == 0 ? "w" : "a");
    check(mf != nullptr, "train_sample_based: cannot open " + cfg.metrics_path);
  }

  auto save_state = [&](std::size_t next_iter) {
    CheckpointMeta meta;
    meta.dim = dim;
    meta.seed = cfg.seed;
    meta.iter = next_iter;
    meta.loss_kind = objectives::to_string(cfg.loss);
    meta.kind = "generator";
    meta.arch = {{"latent_dim", double(gen.config().latent_dim)},
                 {"hidden", double(gen.config().hidden)},
                 {"leak", gen.config().leak}};
    checkpoint_save(cfg.checkpoint_path + ".gen", meta, gen.params(), adam_g,
                    {double(next_iter), wall_accum});
    meta.kind = "discriminator";
    meta.arch = {{"hidden", double(disc.config().hidden)},
                 {"leak", disc.config().leak}};
    checkpoint_save(cfg.checkpoint_path + ".disc", meta, disc.params(),
                    adam_d);
  };

  TrainResult res;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t iter = start_iter; iter < cfg.iterations; ++iter) {
    Rng rng(mix64(cfg.seed, iter + 1));
    Mat real(cfg.batch, dim);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const double* src = data.row_ptr(rng.index(data.rows));
      std::copy(src, src + dim, real.row_ptr(b));
    }
    Mat fake = gen.generate(cfg.batch, rng);

    double disc_loss_val = 0;
    for (std::size_t kd = 0; kd < cfg.k_d; ++kd) {
      GradRecord gd = ad::value_and_grad(
          [&](ad::Tape& t, const ParamVector& pv) {
            return nets::build_disc_loss(t, disc, pv, real, fake);
          },
          disc.params());
      ad::adam_step(disc.params(), gd.grad, adam_d, {cfg.lr, 0.9, 0.999, 1e-8});
      disc_loss_val = gd.loss;
    }

    Mat z(cfg.batch, gen.config().latent_dim);
    for (double& v : z.data) v = rng.normal();
    GradRecord gg = ad::value_and_grad(
        [&](ad::Tape& t, const ParamVector& pv) {
          int x = gen.build_forward(t, t.input(z), pv);
          int lg = disc.build_logit(t, x, disc.params());
          if (cfg.loss == objectives::LossKind::ARLB)
            return t.neg(t.mean_all(lg));
          int lx = t.input(disc.logit_batch(real));
          return t.neg(t.mean_all(t.exp_(t.min0(t.sub(lg, lx)))));
        },
        gen.params());
    ad::adam_step(gen.params(), gg.grad, adam_g, {cfg.lr, 0.9, 0.999, 1e-8});
    res.final_loss = gg.loss;

    bool last = iter + 1 == cfg.iterations;
    if ((iter + 1) % cfg.eval_every == 0 || last) {
      MetricsRecord m;
      m.iter = iter + 1;
      m.loss = gg.loss;
      m.loss_kind = objectives::to_string(cfg.loss);
      m.disc_loss = disc_loss_val;
      std::size_t correct = 0;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        if (disc.logit(real.row_ptr(b)) > 0) ++correct;
        if (disc.logit(fake.row_ptr(b)) <= 0) ++correct;
      }
      m.disc_acc = double(correct) / double(2 * cfg.batch);
      if (eval_target)
        m.ratio_mae = ratio_mae_hist(gen, disc, *eval_target, rng);
      m.wall_s = wall_accum + elapsed_s(t0);
      res.metrics.push_back(m);
      if (mf) write_jsonl(mf, m);
    }
    if (!cfg.checkpoint_path.empty() &&
        ((cfg.checkpoint_every != 0 &&
          (iter + 1) % cfg.checkpoint_every == 0) ||
         last)) {
      wall_accum += elapsed_s(t0);
      t0 = std::chrono::steady_clock::now();
      save_state(iter + 1);
    }
  }
  res.iterations_run = cfg.iterations - start_iter;
  if (mf) std::fclose(mf);
  return res;
}

}  // namespace mhflow::train
