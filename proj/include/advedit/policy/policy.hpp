#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "advedit/policy/mlp.hpp"
#include "advedit/world/world.hpp"

namespace advedit::policy {

constexpr int kActionDim = 2;

struct ObservationParams {
  int waypoints = 15;
  int neighbours = 4;
  double range = 50.0;   // m, position normalization and sensing range
  double v_norm = 16.7;  // m/s, speed normalization

  int dim() const { return 3 + 2 * waypoints + 4 * neighbours; }
};

constexpr int kObservationDim = 49;

/// Layout: [steering, accel_cmd, speed], then waypoint (x, y) pairs in the
/// ego frame, then one (x, y, vx, vy) block per nearest neighbour in the ego
/// frame. Absent neighbours read (1, 0, 0, 0): the distance channel sits at
/// full range. Every entry is clamped to [-1, 1].
Eigen::VectorXd build_observation(const world::WorldState& ws, const world::Route& route,
                                  const ObservationParams& p = {},
                                  std::optional<size_t> hint = std::nullopt);

struct Action {
  double steer = 0.0;
  double throttle_brake = 0.0;

  bool operator==(const Action& o) const {
    return steer == o.steer && throttle_brake == o.throttle_brake;
  }
};

/// c * prev + (1 - c) * raw, clamped to [-1, 1]; the raw action (clamped)
/// when there is no previous action.
Action smooth_action(const std::optional<Action>& prev, const Action& raw, double c = 0.75);

class ActionSmoother {
 public:
  explicit ActionSmoother(double c = 0.75) : c_(c) {}
  Action apply(const Action& raw) {
    prev_ = smooth_action(prev_, raw, c_);
    return *prev_;
  }
  void reset() { prev_.reset(); }

 private:
  double c_;
  std::optional<Action> prev_;
};

struct SacConfig {
  double gamma = 0.98;
  double tau = 0.02;
  long buffer_size = 100000;
  int batch_size = 256;
  int train_freq = 64;
  int gradient_steps = 64;
  long learning_starts = 10000;
  double lr_start = 1e-4;
  double lr_end = 5e-7;
  long total_steps = 100000;
  std::optional<double> target_entropy;  // default -action_dim
  double init_entropy_coef = 1.0;
  double action_smoothing = 0.75;
  std::vector<int> hidden = {500, 300};
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  double entropy_target() const { return target_entropy.value_or(-static_cast<double>(kActionDim)); }
  /// Linear from lr_start at step 0 to lr_end at total_steps, constant after.
  double learning_rate(long step) const;
  void validate() const;
};

nlohmann::json to_json(const SacConfig& c);
/// Unknown keys are rejected; missing keys keep their defaults.
SacConfig sac_config_from_json(const nlohmann::json& j);

struct Batch {
  Eigen::MatrixXd obs;       // D x B
  Eigen::MatrixXd actions;   // 2 x B
  Eigen::VectorXd rewards;   // B
  Eigen::MatrixXd next_obs;  // D x B
  Eigen::VectorXd dones;     // B, 1 for terminal transitions
};

/// Fixed-capacity ring buffer of transitions.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int obs_dim);

  void add(const Eigen::VectorXd& obs, const Action& a, double reward,
           const Eigen::VectorXd& next_obs, bool done);
  long size() const { return size_; }
  long capacity() const { return capacity_; }
  long cursor() const { return cursor_; }
  int obs_dim() const { return obs_dim_; }

  /// Uniform sample of distinct indices (duplicates are redrawn).
  Batch sample(int batch, Rng& rng) const;

  void save(BinaryWriter& w) const;
  static ReplayBuffer load(BinaryReader& r);

 private:
  long capacity_;
  int obs_dim_;
  long size_ = 0;
  long cursor_ = 0;
  Eigen::MatrixXd obs_, next_obs_, actions_;
  Eigen::VectorXd rewards_, dones_;
};

/// Squashed Gaussian policy output for a batch with given standard-normal
/// noise `eps` (2 x B).
struct ActorOutput {
  Eigen::MatrixXd raw;      // network output, 4 x B (means then log-std)
  Eigen::MatrixXd mean;     // 2 x B
  Eigen::MatrixXd log_std;  // clamped, 2 x B
  Eigen::MatrixXd u;        // pre-squash sample
  Eigen::MatrixXd action;   // tanh(u)
  Eigen::VectorXd log_prob; // includes the tanh Jacobian correction
  Mlp::Tape tape;
};

constexpr double kTanhEps = 1e-6;

ActorOutput actor_forward(const Mlp& actor, const Eigen::MatrixXd& obs,
                          const Eigen::MatrixXd& eps, double log_std_min, double log_std_max);

/// Element-wise min of the two critics at (obs, action).
Eigen::VectorXd min_q(const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                      const Eigen::MatrixXd& action);

/// r + (1 - done) * gamma * (min Q_targ(s', a') - alpha * log pi(a'|s')),
/// with a' drawn from the actor using `next_eps`.
Eigen::VectorXd critic_target(const Mlp& actor, const Mlp& q1_targ, const Mlp& q2_targ,
                              const Batch& b, const Eigen::MatrixXd& next_eps, double alpha,
                              double gamma, double log_std_min, double log_std_max);

/// 0.5 * (mean (Q1 - y)^2 + mean (Q2 - y)^2). Gradients are written to g1, g2
/// when given.
double critic_loss(const Mlp& q1, const Mlp& q2, const Eigen::MatrixXd& obs,
                   const Eigen::MatrixXd& actions, const Eigen::VectorXd& target,
                   Eigen::VectorXd* g1 = nullptr, Eigen::VectorXd* g2 = nullptr);

/// mean(alpha * log pi(a|s) - min Q(s, a)) with reparameterized a; the
/// gradient with respect to the actor parameters goes to `grad`.
double actor_loss(const Mlp& actor, const Mlp& q1, const Mlp& q2, double alpha,
                  const Eigen::MatrixXd& obs, const Eigen::MatrixXd& eps, double log_std_min,
                  double log_std_max, Eigen::VectorXd* grad = nullptr);

/// -mean(log_alpha * (log_prob + target_entropy)); d/dlog_alpha to `grad`.
double temperature_loss(double log_alpha, const Eigen::VectorXd& log_prob, double target_entropy,
                        double* grad = nullptr);

/// target <- (1 - tau) * target + tau * online.
void polyak_update(Eigen::VectorXd& target, const Eigen::VectorXd& online, double tau);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double entropy_coef = 0.0;
  double temperature_loss = 0.0;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Soft actor-critic learner with twin critics, Polyak targets and a learned
/// entropy temperature.
class SacAgent {
 public:
  SacAgent(SacConfig cfg, int obs_dim, uint64_t seed);

  /// Raw (unsmoothed) action. Deterministic mode returns tanh(mean).
  Action act(const Eigen::VectorXd& obs, bool deterministic);

  /// One gradient step on a sampled batch at global step `step` (which
  /// selects the learning rate). Throws TrainingError on a non-finite loss.
  UpdateStats update(const ReplayBuffer& buffer, long step);

  const SacConfig& config() const { return cfg_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const Mlp& target_critic(int i) const { return i == 0 ? q1_targ_ : q2_targ_; }
  double log_alpha() const { return log_alpha_; }
  long updates() const { return updates_; }
  Rng& rng() { return rng_; }

  void save(BinaryWriter& w) const;
  static SacAgent load(BinaryReader& r);

 private:
  SacAgent() = default;

  SacConfig cfg_;
  int obs_dim_ = 0;
  Mlp actor_, q1_, q2_, q1_targ_, q2_targ_;
  Adam actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  double log_alpha_ = 0.0;
  long updates_ = 0;
  Rng rng_;
};

}  // namespace advedit::policy
