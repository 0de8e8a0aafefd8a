#include <algorithm>
#include <cmath>
#include <sstream>

#include "advedit/policy/policy.hpp"

namespace advedit::policy {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

Eigen::MatrixXd normal_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace

double SacConfig::learning_rate(long step) const {
  if (step <= 0) return lr_start;
  if (step >= total_steps) return lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_start + (lr_end - lr_start) * frac;
}

void SacConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("sac: " + what);
  };
  require(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  require(buffer_size >= 1, "buffer_size must be >= 1");
  require(batch_size >= 1 && batch_size <= buffer_size, "batch_size must be in [1, buffer_size]");
  require(train_freq >= 1, "train_freq must be >= 1");
  require(gradient_steps >= 0, "gradient_steps must be >= 0");
  require(learning_starts >= 0, "learning_starts must be >= 0");
  require(lr_start > 0.0 && lr_end > 0.0, "learning rates must be > 0");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(init_entropy_coef > 0.0, "init_entropy_coef must be > 0");
  require(action_smoothing >= 0.0 && action_smoothing < 1.0, "action_smoothing must be in [0, 1)");
  require(!hidden.empty(), "hidden must list at least one layer");
  for (int h : hidden) require(h >= 1, "hidden sizes must be >= 1");
  require(log_std_min < log_std_max, "log_std_min must be below log_std_max");
}

nlohmann::json to_json(const SacConfig& c) {
  return {{"gamma", c.gamma},
          {"tau", c.tau},
          {"buffer_size", c.buffer_size},
          {"batch_size", c.batch_size},
          {"train_freq", c.train_freq},
          {"gradient_steps", c.gradient_steps},
          {"learning_starts", c.learning_starts},
          {"lr_start", c.lr_start},
          {"lr_end", c.lr_end},
          {"total_steps", c.total_steps},
          {"target_entropy", c.target_entropy ? nlohmann::json(*c.target_entropy) : nlohmann::json()},
          {"init_entropy_coef", c.init_entropy_coef},
          {"action_smoothing", c.action_smoothing},
          {"hidden", c.hidden},
          {"log_std_min", c.log_std_min},
          {"log_std_max", c.log_std_max}};
}

SacConfig sac_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sac: expected an object");
  SacConfig c;
  for (const auto& [key, v] : j.items()) {
    auto num = [&](auto& field) {
      if (!v.is_number()) throw ConfigError("sac: " + key + " must be a number");
      v.get_to(field);
    };
    if (key == "gamma") num(c.gamma);
    else if (key == "tau") num(c.tau);
    else if (key == "buffer_size") num(c.buffer_size);
    else if (key == "batch_size") num(c.batch_size);
    else if (key == "train_freq") num(c.train_freq);
    else if (key == "gradient_steps") num(c.gradient_steps);
    else if (key == "learning_starts") num(c.learning_starts);
    else if (key == "lr_start") num(c.lr_start);
    else if (key == "lr_end") num(c.lr_end);
    else if (key == "total_steps") num(c.total_steps);
    else if (key == "init_entropy_coef") num(c.init_entropy_coef);
    else if (key == "action_smoothing") num(c.action_smoothing);
    else if (key == "log_std_min") num(c.log_std_min);
    else if (key == "log_std_max") num(c.log_std_max);
    else if (key == "target_entropy") {
      if (v.is_null()) c.target_entropy.reset();
      else if (v.is_number()) c.target_entropy = v.get<double>();
      else throw ConfigError("sac: target_entropy must be a number or null");
    } else if (key == "hidden") {
      if (!v.is_array()) throw ConfigError("sac: hidden must be an array");
      c.hidden.clear();
      for (const auto& h : v) {
        if (!h.is_number_integer()) throw ConfigError("sac: hidden sizes must be integers");
        c.hidden.push_back(h.get<int>());
      }
    } else {
      throw ConfigError("sac: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ActorOutput actor_forward(const Mlp& actor, const Eigen::MatrixXd& obs,
                          const Eigen::MatrixXd& eps, double log_std_min, double log_std_max) {
  ActorOutput o;
  o.raw = actor.forward(obs, &o.tape);
  o.mean = o.raw.topRows(kActionDim);
  o.log_std = o.raw.bottomRows(kActionDim).cwiseMax(log_std_min).cwiseMin(log_std_max);
  o.u = o.mean + o.log_std.array().exp().matrix().cwiseProduct(eps);
  o.action = o.u.array().tanh().matrix();
  const auto a2 = o.action.array().square();
  const Eigen::ArrayXXd per_dim =
      -0.5 * eps.array().square() - o.log_std.array() - kHalfLog2Pi - (1.0 - a2 + kTanhEps).log();
  o.log_prob = per_dim.colwise().sum().transpose().matrix();
  return o;
}

Eigen::VectorXd min_q(const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& action) {
  const Eigen::MatrixXd x = stack(obs, action);
  return q1.forward(x).cwiseMin(q2.forward(x)).transpose();
}

Eigen::VectorXd critic_target(const Mlp& actor, const Mlp& q1_targ, const Mlp& q2_targ,
                              const Batch& b, const Eigen::MatrixXd& next_eps, double alpha,
                              double gamma, double log_std_min, double log_std_max) {
  const ActorOutput next = actor_forward(actor, b.next_obs, next_eps, log_std_min, log_std_max);
  const Eigen::VectorXd q = min_q(q1_targ, q2_targ, b.next_obs, next.action);
  const Eigen::VectorXd soft = q - alpha * next.log_prob;
  return b.rewards.array() + (1.0 - b.dones.array()) * gamma * soft.array();
}

double critic_loss(const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                   const Eigen::MatrixXd& actions, const Eigen::VectorXd& target,
                   Eigen::VectorXd* g1, Eigen::VectorXd* g2) {
  const Eigen::MatrixXd x = stack(obs, actions);
  const double n = static_cast<double>(x.cols());
  double loss = 0.0;
  const Mlp* nets[2] = {&q1, &q2};
  Eigen::VectorXd* grads[2] = {g1, g2};
  for (int k = 0; k < 2; ++k) {
    Mlp::Tape tape;
    const Eigen::MatrixXd q = nets[k]->forward(x, grads[k] ? &tape : nullptr);
    const Eigen::RowVectorXd diff = q.row(0) - target.transpose();
    loss += 0.5 * diff.squaredNorm() / n;
    if (grads[k]) {
      *grads[k] = Eigen::VectorXd::Zero(nets[k]->num_params());
      nets[k]->backward(tape, diff / n, grads[k]);
    }
  }
  return loss;
}

double actor_loss(const Mlp& actor, const Mlp& q1, const Mlp& q2, double alpha,
                  const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps, double log_std_min,
                  double log_std_max, Eigen::VectorXd* grad) {
  const ActorOutput o = actor_forward(actor, obs, eps, log_std_min, log_std_max);
  const Eigen::Index n = obs.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd x = stack(obs, o.action);
  Mlp::Tape t1, t2;
  const Eigen::RowVectorXd v1 = q1.forward(x, &t1).row(0);
  const Eigen::RowVectorXd v2 = q2.forward(x, &t2).row(0);
  const Eigen::RowVectorXd qmin = v1.cwiseMin(v2);
  const double loss = (alpha * o.log_prob.transpose() - qmin).sum() * inv_n;
  if (!grad) return loss;

  // The smaller critic receives the gradient; ties go to the first.
  Eigen::RowVectorXd m1(n), m2(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m1(j) = v1(j) <= v2(j) ? -inv_n : 0.0;
    m2(j) = v1(j) <= v2(j) ? 0.0 : -inv_n;
  }
  const Eigen::MatrixXd da = q1.backward(t1, m1, nullptr).bottomRows(kActionDim) +
                             q2.backward(t2, m2, nullptr).bottomRows(kActionDim);
  const Eigen::ArrayXXd a = o.action.array();
  const Eigen::ArrayXXd sech2 = 1.0 - a.square();
  const Eigen::ArrayXXd dlogp_du = 2.0 * a * sech2 / (sech2 + kTanhEps);
  const Eigen::ArrayXXd du = alpha * inv_n * dlogp_du + da.array() * sech2;
  const Eigen::ArrayXXd std_eps = o.log_std.array().exp() * eps.array();
  Eigen::ArrayXXd dls = -alpha * inv_n + du * std_eps;
  const Eigen::ArrayXXd raw_ls = o.raw.bottomRows(kActionDim).array();
  dls = (raw_ls >= log_std_min && raw_ls <= log_std_max).select(dls, 0.0);

  Eigen::MatrixXd dout(2 * kActionDim, n);
  dout << du.matrix(), dls.matrix();
  *grad = Eigen::VectorXd::Zero(actor.num_params());
  actor.backward(o.tape, dout, grad);
  return loss;
}

double temperature_loss(double log_alpha, const Eigen::VectorXd& log_prob, double target_entropy,
                        double* grad) {
  const double m = (log_prob.array() + target_entropy).mean();
  if (grad) *grad = -m;
  return -log_alpha * m;
}

void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau) {
  target = (1.0 - tau) * target + tau * online;
}

SacAgent::SacAgent(SacConfig cfg, int obs_dim, uint64_t seed)
    : cfg_(std::move(cfg)), obs_dim_(obs_dim), rng_(Rng::derive(seed, "policy")) {
  cfg_.validate();
  std::vector<int> actor_sizes{obs_dim};
  actor_sizes.insert(actor_sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  actor_sizes.push_back(2 * kActionDim);
  std::vector<int> critic_sizes{obs_dim + kActionDim};
  critic_sizes.insert(critic_sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  critic_sizes.push_back(1);
  Rng init(Rng::derive(seed, "policy.init"));
  actor_ = Mlp(actor_sizes, init);
  q1_ = Mlp(critic_sizes, init);
  q2_ = Mlp(critic_sizes, init);
  q1_targ_ = q1_;
  q2_targ_ = q2_;
  log_alpha_ = std::log(cfg_.init_entropy_coef);
}

Action SacAgent::act(const Eigen::VectorXd& obs, bool deterministic) {
  if (obs.size() != obs_dim_) throw ValidationError("SacAgent::act: observation dimension mismatch");
  const Eigen::MatrixXd eps = deterministic ? Eigen::MatrixXd::Zero(kActionDim, 1)
                                            : normal_noise(rng_, kActionDim, 1);
  const ActorOutput o = actor_forward(actor_, obs, eps, cfg_.log_std_min, cfg_.log_std_max);
  return {o.action(0, 0), o.action(1, 0)};
}

UpdateStats SacAgent::update(const ReplayBuffer& buffer, long step) {
  const double lr = cfg_.learning_rate(step);
  const Batch b = buffer.sample(cfg_.batch_size, rng_);
  const Eigen::MatrixXd eps = normal_noise(rng_, kActionDim, cfg_.batch_size);
  const Eigen::MatrixXd next_eps = normal_noise(rng_, kActionDim, cfg_.batch_size);
  UpdateStats s;

  const ActorOutput pi = actor_forward(actor_, b.obs, eps, cfg_.log_std_min, cfg_.log_std_max);
  const double alpha = std::exp(log_alpha_);
  double g_alpha = 0.0;
  s.temperature_loss = temperature_loss(log_alpha_, pi.log_prob, cfg_.entropy_target(), &g_alpha);
  Eigen::VectorXd la(1), gla(1);
  la << log_alpha_;
  gla << g_alpha;
  alpha_opt_.step(la, gla, lr);
  log_alpha_ = la(0);

  const Eigen::VectorXd y = critic_target(actor_, q1_targ_, q2_targ_, b, next_eps, alpha,
                                          cfg_.gamma, cfg_.log_std_min, cfg_.log_std_max);
  Eigen::VectorXd g1, g2;
  s.critic_loss = critic_loss(q1_, q2_, b.obs, b.actions, y, &g1, &g2);
  Eigen::VectorXd ga;
  if (std::isfinite(s.critic_loss)) {
    q1_opt_.step(q1_.params(), g1, lr);
    q2_opt_.step(q2_.params(), g2, lr);
    s.actor_loss = actor_loss(actor_, q1_, q2_, alpha, b.obs, eps, cfg_.log_std_min,
                              cfg_.log_std_max, &ga);
  }
  if (!std::isfinite(s.critic_loss) || !std::isfinite(s.actor_loss) ||
      !std::isfinite(s.temperature_loss) || !std::isfinite(log_alpha_)) {
    std::ostringstream msg;
    msg << "non-finite SAC loss at update " << updates_ << ": critic " << s.critic_loss
        << ", actor " << s.actor_loss << ", temperature " << s.temperature_loss
        << "; batch reward min " << b.rewards.minCoeff() << " max " << b.rewards.maxCoeff()
        << " mean " << b.rewards.mean() << ", |obs| max " << b.obs.cwiseAbs().maxCoeff()
        << ", target min " << y.minCoeff() << " max " << y.maxCoeff();
    throw TrainingError(msg.str());
  }
  actor_opt_.step(actor_.params(), ga, lr);
  polyak_update(q1_targ_.params(), q1_.params(), cfg_.tau);
  polyak_update(q2_targ_.params(), q2_.params(), cfg_.tau);
  s.entropy_coef = std::exp(log_alpha_);
  ++updates_;
  return s;
}

void SacAgent::save(BinaryWriter& w) const {
  w.str(to_json(cfg_).dump());
  w.i64(obs_dim_);
  for (const Mlp* m : {&actor_, &q1_, &q2_, &q1_targ_, &q2_targ_}) m->save(w);
  for (const Adam* a : {&actor_opt_, &q1_opt_, &q2_opt_, &alpha_opt_}) a->save(w);
  w.f64(log_alpha_);
  w.i64(updates_);
  w.str(rng_.save());
}

SacAgent SacAgent::load(BinaryReader& r) {
  SacAgent a;
  try {
    a.cfg_ = sac_config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad SAC config: ") + e.what());
  }
  a.obs_dim_ = static_cast<int>(r.i64());
  for (Mlp* m : {&a.actor_, &a.q1_, &a.q2_, &a.q1_targ_, &a.q2_targ_}) *m = Mlp::load(r);
  for (Adam* o : {&a.actor_opt_, &a.q1_opt_, &a.q2_opt_, &a.alpha_opt_}) *o = Adam::load(r);
  a.log_alpha_ = r.f64();
  a.updates_ = r.i64();
  a.rng_.load(r.str());
  if (a.actor_.in_dim() != a.obs_dim_ || a.actor_.out_dim() != 2 * kActionDim ||
      a.q1_.in_dim() != a.obs_dim_ + kActionDim) {
    throw ParseError("checkpoint: network shapes do not match the observation size");
  }
  return a;
}

}  // namespace advedit::policy
