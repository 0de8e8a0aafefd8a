#include <algorithm>
#include <cmath>

#include "advedit/policy/policy.hpp"

namespace advedit::policy {

Eigen::VectorXd build_observation(const world::WorldState& ws, const world::Route& route,
                                  const ObservationParams& p, std::optional<size_t> hint) {
  Eigen::VectorXd o = Eigen::VectorXd::Zero(p.dim());
  const auto& ego = ws.ego;
  o(0) = ego.steering;
  o(1) = ego.accel_cmd;
  o(2) = ego.speed / p.v_norm;

  Eigen::Index k = 3;
  if (!route.empty()) {
    for (const Vec2& w : world::upcoming_waypoints(route, ego, p.waypoints, hint)) {
      o(k++) = w.x() / p.range;
      o(k++) = w.y() / p.range;
    }
  }
  k = 3 + 2 * p.waypoints;

  const Frame2D frame{ego.position, ego.heading};
  std::vector<std::pair<double, int>> near;
  for (const auto& [id, other] : ws.agents) {
    const double d = (other.position - ego.position).norm();
    if (d <= p.range) near.emplace_back(d, id);
  }
  std::sort(near.begin(), near.end());
  for (int i = 0; i < p.neighbours; ++i) {
    if (static_cast<size_t>(i) < near.size()) {
      const auto& other = ws.agents.at(near[static_cast<size_t>(i)].second);
      const Vec2 rel = frame.to_local(other.position);
      const Vec2 vel = frame.rotate_to_local(other.velocity() - ego.velocity());
      o(k) = rel.x() / p.range;
      o(k + 1) = rel.y() / p.range;
      o(k + 2) = vel.x() / p.v_norm;
      o(k + 3) = vel.y() / p.v_norm;
    } else {
      o(k) = 1.0;
    }
    k += 4;
  }
  return o.cwiseMax(-1.0).cwiseMin(1.0);
}

Action smooth_action(const std::optional<Action>& prev, const Action& raw, double c) {
  Action out = raw;
  if (prev) {
    out.steer = c * prev->steer + (1.0 - c) * raw.steer;
    out.throttle_brake = c * prev->throttle_brake + (1.0 - c) * raw.throttle_brake;
  }
  out.steer = std::clamp(out.steer, -1.0, 1.0);
  out.throttle_brake = std::clamp(out.throttle_brake, -1.0, 1.0);
  return out;
}

ReplayBuffer::ReplayBuffer(long capacity, int obs_dim)
    : capacity_(capacity), obs_dim_(obs_dim) {
  if (capacity < 1 || obs_dim < 1) throw ValidationError("ReplayBuffer: bad capacity or dimension");
  obs_ = Eigen::MatrixXd::Zero(obs_dim, capacity);
  next_obs_ = Eigen::MatrixXd::Zero(obs_dim, capacity);
  actions_ = Eigen::MatrixXd::Zero(kActionDim, capacity);
  rewards_ = Eigen::VectorXd::Zero(capacity);
  dones_ = Eigen::VectorXd::Zero(capacity);
}

void ReplayBuffer::add(const Eigen::VectorXd& obs, const Action& a, double reward,
                       const Eigen::VectorXd& next_obs, bool done) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_) {
    throw ValidationError("ReplayBuffer::add: observation dimension mismatch");
  }
  obs_.col(cursor_) = obs;
  next_obs_.col(cursor_) = next_obs;
  actions_(0, cursor_) = a.steer;
  actions_(1, cursor_) = a.throttle_brake;
  rewards_(cursor_) = reward;
  dones_(cursor_) = done ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(int batch, Rng& rng) const {
  if (batch < 1 || batch > size_) {
    throw ValidationError("ReplayBuffer::sample: batch " + std::to_string(batch) +
                          " exceeds size " + std::to_string(size_));
  }
  std::vector<long> idx;
  idx.reserve(static_cast<size_t>(batch));
  std::vector<char> taken(static_cast<size_t>(size_), 0);
  while (static_cast<int>(idx.size()) < batch) {
    const long i = static_cast<long>(rng.uniform() * static_cast<double>(size_));
    if (taken[static_cast<size_t>(i)]) continue;
    taken[static_cast<size_t>(i)] = 1;
    idx.push_back(i);
  }
  Batch b;
  b.obs.resize(obs_dim_, batch);
  b.next_obs.resize(obs_dim_, batch);
  b.actions.resize(kActionDim, batch);
  b.rewards.resize(batch);
  b.dones.resize(batch);
  for (int j = 0; j < batch; ++j) {
    const long i = idx[static_cast<size_t>(j)];
    b.obs.col(j) = obs_.col(i);
    b.next_obs.col(j) = next_obs_.col(i);
    b.actions.col(j) = actions_.col(i);
    b.rewards(j) = rewards_(i);
    b.dones(j) = dones_(i);
  }
  return b;
}

void ReplayBuffer::save(BinaryWriter& w) const {
  w.i64(capacity_);
  w.i64(obs_dim_);
  w.i64(size_);
  w.i64(cursor_);
  // Only the filled columns are written.
  w.mat(obs_.leftCols(size_));
  w.mat(next_obs_.leftCols(size_));
  w.mat(actions_.leftCols(size_));
  w.vec(rewards_.head(size_));
  w.vec(dones_.head(size_));
}

ReplayBuffer ReplayBuffer::load(BinaryReader& r) {
  const long capacity = r.i64();
  const int dim = static_cast<int>(r.i64());
  if (capacity < 1 || dim < 1) throw ParseError("ReplayBuffer: bad header");
  ReplayBuffer b(capacity, dim);
  b.size_ = r.i64();
  b.cursor_ = r.i64();
  if (b.size_ < 0 || b.size_ > capacity || b.cursor_ < 0 || b.cursor_ >= capacity) {
    throw ParseError("ReplayBuffer: bad size or cursor");
  }
  const auto obs = r.mat(), next = r.mat(), act = r.mat();
  const auto rew = r.vec(), done = r.vec();
  if (obs.rows() != dim || obs.cols() != b.size_ || next.rows() != dim ||
      next.cols() != b.size_ || act.rows() != kActionDim || act.cols() != b.size_ ||
      rew.size() != b.size_ || done.size() != b.size_) {
    throw ParseError("ReplayBuffer: payload shape mismatch");
  }
  b.obs_.leftCols(b.size_) = obs;
  b.next_obs_.leftCols(b.size_) = next;
  b.actions_.leftCols(b.size_) = act;
  b.rewards_.head(b.size_) = rew;
  b.dones_.head(b.size_) = done;
  return b;
}

}  // namespace advedit::policy
