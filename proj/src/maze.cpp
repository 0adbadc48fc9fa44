#include <algorithm>
#include <deque>
#include <stdexcept>

#include "evolgym/envs.hpp"
#include "evolgym/util.hpp"

namespace evolgym::envs {

namespace {

// Direction order matches the blocked_ array: up, down, left, right.
constexpr int kUp = 0, kDown = 1, kLeft = 2, kRight = 3;
constexpr int kDx[4] = {-1, 1, 0, 0};
constexpr int kDy[4] = {0, 0, -1, 1};
const char* kActionNames[4] = {"move up", "move down", "move left", "move right"};

int action_direction(const std::string& normalized) {
  for (int d = 0; d < 4; ++d) {
    if (normalized == kActionNames[d]) return d;
  }
  return -1;
}

}  // namespace

const protocol::EnvDescriptor& maze_descriptor() {
  static const protocol::EnvDescriptor descriptor{
      "maze", MazeWorld::kMaxRounds, protocol::RewardKind::kBinary,
      "You are an expert maze solver. Your objective is to reach the goal in as few steps as "
      "possible. At each step you will be given information about where the goal is, your current "
      "position, and the walls that surround you. When you move right you increase your y "
      "position by 1, when you move down you increase your x position by 1. Your possible actions "
      "are \"move up\", \"move down\", \"move left\", \"move right\". Formally, your return "
      "should be in this format:\n\nThought: <Your Thought>\nAction: <Your Action>"};
  return descriptor;
}

MazeWorld::MazeWorld(int size, std::vector<std::array<bool, 4>> blocked, MazeCell start,
                     MazeCell goal)
    : size_(size), blocked_(std::move(blocked)), start_(start), goal_(goal), position_(start) {
  if (static_cast<int>(blocked_.size()) != size_ * size_) {
    throw std::invalid_argument("maze wall table does not match size");
  }
}

const protocol::EnvDescriptor& MazeWorld::descriptor() const { return maze_descriptor(); }

bool MazeWorld::blocked(MazeCell cell, int direction) const {
  const int nx = cell.x + kDx[direction];
  const int ny = cell.y + kDy[direction];
  if (nx < 1 || nx > size_ || ny < 1 || ny > size_) return true;
  return blocked_[cell_index(cell)][direction];
}

std::string MazeWorld::state_text() const {
  std::string text = "The goal is at position " + std::to_string(goal_.x) + ", " +
                     std::to_string(goal_.y) + ". Your current position is at position " +
                     std::to_string(position_.x) + ", " + std::to_string(position_.y) + ". ";
  std::vector<std::string> walls;
  if (blocked(position_, kLeft)) walls.push_back("to your left");
  if (blocked(position_, kRight)) walls.push_back("to your right");
  if (blocked(position_, kUp)) walls.push_back("above you");
  if (blocked(position_, kDown)) walls.push_back("below you");
  if (walls.empty()) {
    text += "There are no walls around you.";
  } else {
    text += "There are walls " + util::join(walls, ", ") + ".";
  }
  return text;
}

std::string MazeWorld::instruction_text() const {
  return "Now let's start a new game. Return your action and your thought in the format above "
         "strictly. Now, make the optimal action given the current environment state: " +
         state_text();
}

protocol::StepResult MazeWorld::step(const std::string& action) {
  if (done_) throw std::logic_error("step on finished maze world");
  rounds_used_ += 1;

  protocol::StepResult result;
  result.step_reward = -1.0;
  const int direction = action_direction(util::normalize_ws(action));
  if (direction < 0) {
    result.observation = "Invalid action.";
  } else if (blocked(position_, direction)) {
    result.observation = "You hit a wall.";
  } else {
    position_.x += kDx[direction];
    position_.y += kDy[direction];
    result.observation = state_text();
  }

  if (position_ == goal_) {
    done_ = true;
    reward_ = 1.0;
  } else if (rounds_used_ >= kMaxRounds) {
    done_ = true;
    reward_ = 0.0;
  }
  result.done = done_;
  result.trajectory_reward_so_far = reward_;
  result.available_actions = available_actions();
  return result;
}

std::vector<std::string> MazeWorld::available_actions() const {
  std::vector<std::string> actions;
  for (int d = 0; d < 4; ++d) {
    if (!blocked(position_, d)) actions.push_back(kActionNames[d]);
  }
  std::sort(actions.begin(), actions.end());
  return actions;
}

std::string MazeWorld::fingerprint() const {
  return "maze:pos=" + std::to_string(position_.x) + "," + std::to_string(position_.y) +
         ";goal=" + std::to_string(goal_.x) + "," + std::to_string(goal_.y) +
         ";rounds=" + std::to_string(rounds_used_);
}

std::vector<std::string> MazeWorld::shortest_path(MazeCell from) const {
  std::vector<int> parent_action(size_ * size_, -1);
  std::vector<bool> visited(size_ * size_, false);
  std::deque<MazeCell> frontier{from};
  visited[cell_index(from)] = true;
  while (!frontier.empty()) {
    const MazeCell cell = frontier.front();
    frontier.pop_front();
    if (cell == goal_) break;
    for (int d = 0; d < 4; ++d) {
      if (blocked(cell, d)) continue;
      const MazeCell next{cell.x + kDx[d], cell.y + kDy[d]};
      if (visited[cell_index(next)]) continue;
      visited[cell_index(next)] = true;
      parent_action[cell_index(next)] = d;
      frontier.push_back(next);
    }
  }
  if (!visited[cell_index(goal_)]) {
    throw core::DomainError("maze goal unreachable");
  }
  std::vector<std::string> actions;
  MazeCell cell = goal_;
  while (!(cell == from)) {
    const int d = parent_action[cell_index(cell)];
    actions.push_back(kActionNames[d]);
    cell = MazeCell{cell.x - kDx[d], cell.y - kDy[d]};
  }
  std::reverse(actions.begin(), actions.end());
  return actions;
}

std::unique_ptr<MazeWorld> generate_maze(std::uint64_t seed, int size) {
  if (size < 5 || size > 9) {
    throw core::DomainError("maze size must be in [5,9], got " + std::to_string(size));
  }
  auto rng = util::make_rng(util::mix(util::mix(seed, "maze"), static_cast<std::uint64_t>(size)));

  const int n = size;
  auto index = [n](int x, int y) { return (x - 1) * n + (y - 1); };
  std::vector<std::array<bool, 4>> blocked(n * n, {true, true, true, true});
  std::vector<bool> visited(n * n, false);

  // Randomized DFS carving yields a spanning maze; every cell stays reachable.
  std::vector<MazeCell> stack;
  MazeCell first{1 + static_cast<int>(util::next_below(rng, n)),
                 1 + static_cast<int>(util::next_below(rng, n))};
  visited[index(first.x, first.y)] = true;
  stack.push_back(first);
  while (!stack.empty()) {
    const MazeCell cell = stack.back();
    std::vector<int> candidates;
    for (int d = 0; d < 4; ++d) {
      const int nx = cell.x + kDx[d];
      const int ny = cell.y + kDy[d];
      if (nx < 1 || nx > n || ny < 1 || ny > n || visited[index(nx, ny)]) continue;
      candidates.push_back(d);
    }
    if (candidates.empty()) {
      stack.pop_back();
      continue;
    }
    const int d = candidates[util::next_below(rng, candidates.size())];
    const MazeCell next{cell.x + kDx[d], cell.y + kDy[d]};
    blocked[index(cell.x, cell.y)][d] = false;
    blocked[index(next.x, next.y)][d ^ 1] = false;  // opposite direction
    visited[index(next.x, next.y)] = true;
    stack.push_back(next);
  }

  // Loop injection: knock out a fraction of the remaining interior walls.
  constexpr double kLoopProbability = 0.1;
  for (int x = 1; x <= n; ++x) {
    for (int y = 1; y <= n; ++y) {
      for (const int d : {kDown, kRight}) {
        const int nx = x + kDx[d];
        const int ny = y + kDy[d];
        if (nx < 1 || nx > n || ny < 1 || ny > n) continue;
        if (!blocked[index(x, y)][d]) continue;
        if (util::next_unit(rng) < kLoopProbability) {
          blocked[index(x, y)][d] = false;
          blocked[index(nx, ny)][d ^ 1] = false;
        }
      }
    }
  }

  const MazeCell start{1 + static_cast<int>(util::next_below(rng, n)),
                       1 + static_cast<int>(util::next_below(rng, n))};

  // BFS distances from the start; goal distance is kept clear of max_rounds.
  std::vector<int> dist(n * n, -1);
  std::deque<MazeCell> frontier{start};
  dist[index(start.x, start.y)] = 0;
  while (!frontier.empty()) {
    const MazeCell cell = frontier.front();
    frontier.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int nx = cell.x + kDx[d];
      const int ny = cell.y + kDy[d];
      if (nx < 1 || nx > n || ny < 1 || ny > n) continue;
      if (blocked[index(cell.x, cell.y)][d] || dist[index(nx, ny)] >= 0) continue;
      dist[index(nx, ny)] = dist[index(cell.x, cell.y)] + 1;
      frontier.push_back(MazeCell{nx, ny});
    }
  }
  std::vector<MazeCell> candidates;
  for (int x = 1; x <= n; ++x) {
    for (int y = 1; y <= n; ++y) {
      const int d = dist[index(x, y)];
      if (d >= 3 && d <= 13) candidates.push_back(MazeCell{x, y});
    }
  }
  if (candidates.empty()) {
    throw core::DomainError("maze generation produced no goal candidates");
  }
  const MazeCell goal = candidates[util::next_below(rng, candidates.size())];
  return std::make_unique<MazeWorld>(n, std::move(blocked), start, goal);
}

}  // namespace evolgym::envs
