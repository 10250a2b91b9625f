#include "cssl/learner.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cssl/rng.hpp"

namespace cssl {

namespace {

void check_dim(const LearnerState& state, Eigen::Ref<const Vector> x) {
  if (x.size() != state.d)
    throw std::invalid_argument("feature dimension mismatch: expected " +
                                std::to_string(state.d) + ", got " +
                                std::to_string(x.size()));
}

int checked_label(const LearnerState& state, double y) {
  const int label = static_cast<int>(y);
  if (static_cast<double>(label) != y || label < 0 || label >= state.C)
    throw std::invalid_argument("class label outside [0, C)");
  return label;
}

// Row-wise softmax with the class scores shifted by the row max.
Matrix softmax_rows(Matrix z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

Gradient gradient_on(const LearnerState& state, const Matrix& X, const Vector& y) {
  const auto n = X.rows();
  Gradient g;
  if (state.kind == TaskKind::classification) {
    Matrix P = softmax_rows((X * state.weights.transpose()).rowwise() +
                            state.bias.transpose());
    for (Eigen::Index i = 0; i < n; ++i) P(i, checked_label(state, y[i])) -= 1.0;
    g.weights = P.transpose() * X / static_cast<double>(n);
    g.bias = P.colwise().sum().transpose() / static_cast<double>(n);
  } else {
    Vector r = X * state.weights.row(0).transpose();
    r.array() += state.bias[0];
    r -= y;
    g.weights = (2.0 / static_cast<double>(n)) * (r.transpose() * X);
    g.bias = Vector::Constant(1, 2.0 * r.mean());
  }
  return g;
}

}  // namespace

LearnerState make_classifier(int d, int C) {
  if (d <= 0 || C < 2)
    throw std::invalid_argument("classifier needs d > 0 and C >= 2");
  LearnerState s;
  s.kind = TaskKind::classification;
  s.d = d;
  s.C = C;
  s.weights = Matrix::Zero(C, d);
  s.bias = Vector::Zero(C);
  return s;
}

LearnerState make_regressor(int d) {
  if (d <= 0) throw std::invalid_argument("regressor needs d > 0");
  LearnerState s;
  s.kind = TaskKind::regression;
  s.d = d;
  s.C = 0;
  s.weights = Matrix::Zero(1, d);
  s.bias = Vector::Zero(1);
  return s;
}

bool same_parameters(const LearnerState& a, const LearnerState& b) {
  if (a.kind != b.kind || a.d != b.d || a.C != b.C) return false;
  if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols())
    return false;
  if (a.bias.size() != b.bias.size()) return false;
  return std::memcmp(a.weights.data(), b.weights.data(),
                     sizeof(double) * a.weights.size()) == 0 &&
         std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) == 0;
}

Batch make_batch(std::span<const Example> examples) {
  if (examples.empty()) return Batch{Matrix(0, 0), Vector(0)};
  const Eigen::Index d = examples.front().x.size();
  Batch batch;
  batch.X = Matrix(static_cast<Eigen::Index>(examples.size()), d);
  batch.y = Vector(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].x.size() != d)
      throw std::invalid_argument("batch mixes feature dimensions");
    if (!examples[i].y)
      throw std::invalid_argument("unlabelled example in training batch (t=" +
                                  std::to_string(examples[i].t) + ")");
    batch.X.row(i) = examples[i].x.transpose();
    batch.y[i] = *examples[i].y;
  }
  return batch;
}

Vector logits(const LearnerState& state, Eigen::Ref<const Vector> x) {
  check_dim(state, x);
  return state.weights * x + state.bias;
}

Vector predict_proba(const LearnerState& state, Eigen::Ref<const Vector> x) {
  if (state.kind != TaskKind::classification)
    throw std::invalid_argument("predict_proba requires a classification learner");
  Vector z = logits(state, x);
  z.array() -= z.maxCoeff();
  Vector p = z.array().exp();
  return p / p.sum();
}

int predict_class(const LearnerState& state, Eigen::Ref<const Vector> x) {
  const Vector p = predict_proba(state, x);
  int best = 0;
  for (int c = 1; c < state.C; ++c)
    if (p[c] > p[best]) best = c;  // strict: ties keep the lowest index
  return best;
}

double predict(const LearnerState& state, Eigen::Ref<const Vector> x) {
  if (state.kind == TaskKind::classification)
    return static_cast<double>(predict_class(state, x));
  check_dim(state, x);
  return state.weights.row(0).dot(x) + state.bias[0];
}

double example_loss(const LearnerState& state, Eigen::Ref<const Vector> x, double y) {
  if (state.kind == TaskKind::classification) {
    Vector z = logits(state, x);
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    return lse - z[checked_label(state, y)];
  }
  check_dim(state, x);
  const double r = state.weights.row(0).dot(x) + state.bias[0] - y;
  return r * r;
}

double loss(const LearnerState& state, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss of an empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    total += example_loss(state, batch.X.row(i).transpose(), batch.y[i]);
  return total / static_cast<double>(batch.size());
}

Gradient gradient(const LearnerState& state, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("gradient of an empty batch");
  if (batch.X.cols() != state.d)
    throw std::invalid_argument("batch dimension mismatch");
  return gradient_on(state, batch.X, batch.y);
}

LearnerState fit(const LearnerState& state, const Batch& batch, const TrainConfig& cfg) {
  if (cfg.learning_rate < 0.0 || !std::isfinite(cfg.learning_rate))
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");

  LearnerState out = state;
  if (batch.size() == 0) return out;  // documented no-op

  if (batch.X.cols() != state.d)
    throw std::invalid_argument("batch dimension mismatch");
  if (!batch.X.allFinite() || !batch.y.allFinite())
    throw std::runtime_error("training batch contains non-finite values");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(batch.size()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.shuffle_seed);

  const Eigen::Index n = batch.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Matrix X(count, state.d);
      Vector y(count);
      for (Eigen::Index i = 0; i < count; ++i) {
        X.row(i) = batch.X.row(order[static_cast<std::size_t>(start + i)]);
        y[i] = batch.y[order[static_cast<std::size_t>(start + i)]];
      }
      const Gradient g = gradient_on(out, X, y);
      out.weights -= cfg.learning_rate * g.weights;
      out.bias -= cfg.learning_rate * g.bias;
    }
    if (!out.weights.allFinite() || !out.bias.allFinite())
      throw std::runtime_error("training diverged to non-finite parameters");
  }
  return out;
}

void save_learner(const LearnerState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "cssl-learner 1\n";
  out << "kind " << to_string(state.kind) << "\n";
  out << "d " << state.d << "\n";
  out << "C " << state.C << "\n";
  char buf[40];
  out << "weights";
  for (Eigen::Index r = 0; r < state.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < state.weights.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%a", state.weights(r, c));
      out << ' ' << buf;
    }
  out << "\nbias";
  for (Eigen::Index i = 0; i < state.bias.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%a", state.bias[i]);
    out << ' ' << buf;
  }
  out << "\n";
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

LearnerState load_learner(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "cssl-learner" || version != 1)
    throw std::runtime_error("unsupported checkpoint format in " + path);

  std::string key, kind_str;
  int d = 0, C = 0;
  in >> key >> kind_str;
  if (key != "kind") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> d;
  if (key != "d") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> C;
  if (key != "C") throw std::runtime_error("malformed checkpoint: " + path);

  const TaskKind kind = task_kind_from_string(kind_str);
  LearnerState state =
      kind == TaskKind::classification ? make_classifier(d, C) : make_regressor(d);

  auto read_value = [&in, &path]() {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("truncated checkpoint: " + path);
    return std::strtod(token.c_str(), nullptr);
  };

  in >> key;
  if (key != "weights") throw std::runtime_error("malformed checkpoint: " + path);
  for (Eigen::Index r = 0; r < state.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < state.weights.cols(); ++c)
      state.weights(r, c) = read_value();
  in >> key;
  if (key != "bias") throw std::runtime_error("malformed checkpoint: " + path);
  for (Eigen::Index i = 0; i < state.bias.size(); ++i) state.bias[i] = read_value();
  return state;
}

}  // namespace cssl
