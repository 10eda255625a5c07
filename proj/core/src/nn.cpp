#include "bidex/nn.hpp"

#include <Eigen/QR>

#include <cmath>
#include <stdexcept>

namespace bidex::nn {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.next_gaussian();
  }
  return m;
}

/// Orthogonal init scaled by gain; falls back to the transpose trick for
/// wide matrices.
Matrix orthogonal_init(Eigen::Index rows, Eigen::Index cols, double gain,
                       RngStream& rng) {
  const bool wide = cols > rows;
  const Eigen::Index r = wide ? cols : rows;
  const Eigen::Index c = wide ? rows : cols;
  Matrix a = gaussian_matrix(r, c, rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  // Sign-fix so the decomposition is unique.
  Matrix rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < c; ++j) {
    if (rmat(j, j) < 0) q.col(j) *= -1.0;
  }
  Matrix w = wide ? Matrix(q.transpose()) : q;
  return gain * w;
}

Matrix elu(const Matrix& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

Matrix elu_derivative_from_pre(const Matrix& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

}  // namespace

Mlp::Mlp(const MlpSpec& spec, RngStream& rng, double output_gain,
         const std::string& name)
    : spec_(spec), name_(name) {
  if (spec.input_width < 1 || spec.output_width < 1) {
    throw std::invalid_argument("Mlp: widths must be >= 1");
  }
  for (int h : spec.hidden) {
    if (h < 1) throw std::invalid_argument("Mlp: widths must be >= 1");
  }
  std::vector<int> widths;
  widths.push_back(spec.input_width);
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(spec.output_width);
  const double kHiddenGain = std::sqrt(2.0);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    const double gain = last ? output_gain : kHiddenGain;
    weights_.push_back(orthogonal_init(widths[l + 1], widths[l], gain, rng));
    biases_.push_back(Matrix::Zero(widths[l + 1], 1));
  }
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (x.cols() != spec_.input_width) {
    throw std::invalid_argument(name_ + ": input width mismatch, expected " +
                                std::to_string(spec_.input_width) + ", got " +
                                std::to_string(x.cols()));
  }
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = a * weights_[l].transpose();
    z.rowwise() += biases_[l].col(0).transpose();
    const bool last = l + 1 == weights_.size();
    Matrix out;
    if (!last) {
      out = elu(z);
    } else if (spec_.output_activation == OutputActivation::Tanh) {
      out = z.array().tanh();
    } else {
      out = z;
    }
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(out);
    }
    a = std::move(out);
  }
  return a;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& upstream,
                     GradList& grads) const {
  const std::size_t L = weights_.size();
  std::vector<Matrix> dW(L);
  std::vector<Matrix> db(L);
  Matrix delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    const bool last = l + 1 == L;
    if (last) {
      if (spec_.output_activation == OutputActivation::Tanh) {
        delta = delta.cwiseProduct(
            (1.0 - cache.post[l].array().square()).matrix());
      }
    } else {
      delta = delta.cwiseProduct(elu_derivative_from_pre(cache.pre[l]));
    }
    const Matrix& a_prev = l == 0 ? cache.input : cache.post[l - 1];
    dW[l] = delta.transpose() * a_prev;
    db[l] = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * weights_[l];
  }
  Matrix d_input = delta * weights_[0];
  for (std::size_t l = 0; l < L; ++l) {
    grads.push_back(std::move(dW[l]));
    grads.push_back(std::move(db[l]));
  }
  return d_input;
}

std::vector<ParamRef> Mlp::params() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({name_ + ".w" + std::to_string(l), &weights_[l]});
    out.push_back({name_ + ".b" + std::to_string(l), &biases_[l]});
  }
  return out;
}

std::vector<ParamRef> Mlp::params() const {
  return const_cast<Mlp*>(this)->params();
}

PointEncoder::PointEncoder(const PointEncoderSpec& spec, RngStream& rng,
                           const std::string& name)
    : spec_(spec) {
  if (spec.per_point.size() < 1 || spec.output_width < 1) {
    throw std::invalid_argument("PointEncoder: invalid spec");
  }
  MlpSpec pp;
  pp.input_width = 3;
  pp.hidden.assign(spec.per_point.begin(), spec.per_point.end() - 1);
  pp.output_width = spec.per_point.back();
  per_point_ = Mlp(pp, rng, std::sqrt(2.0), name + ".point");

  MlpSpec post;
  post.input_width = 2 * spec.per_point.back();
  post.hidden = spec.post_pool;
  post.output_width = spec.output_width;
  post_ = Mlp(post, rng, 1.0, name + ".post");
}

Matrix PointEncoder::forward(const Matrix& points,
                             Eigen::Index points_per_sample,
                             Cache* cache) const {
  if (points_per_sample < 1 || points.rows() % points_per_sample != 0) {
    throw std::invalid_argument("PointEncoder: ragged point batch");
  }
  const Eigen::Index n = points.rows() / points_per_sample;
  Cache local;
  Cache* c = cache ? cache : &local;
  c->batch = n;
  c->points_per_sample = points_per_sample;

  // ELU on the per-point output keeps both pooling branches nonlinear.
  Matrix feat_pre = per_point_.forward(points, &c->per_point);
  Matrix feat = elu(feat_pre);
  const Eigen::Index F = feat.cols();
  c->point_features = feat;

  Matrix pooled(n, 2 * F);
  c->argmax.assign(static_cast<std::size_t>(n * F), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto block = feat.middleRows(i * points_per_sample, points_per_sample);
    for (Eigen::Index f = 0; f < F; ++f) {
      Eigen::Index arg = 0;
      const double mx = block.col(f).maxCoeff(&arg);
      pooled(i, f) = mx;
      c->argmax[static_cast<std::size_t>(i * F + f)] =
          i * points_per_sample + arg;
      pooled(i, F + f) = block.col(f).mean();
    }
  }
  return post_.forward(pooled, cache ? &c->post : nullptr);
}

Matrix PointEncoder::backward(const Cache& cache, const Matrix& upstream,
                              GradList& grads) const {
  // Parameter order must match params(): per-point first, then post.
  GradList post_grads;
  Matrix d_pooled = post_.backward(cache.post, upstream, post_grads);

  const Eigen::Index n = cache.batch;
  const Eigen::Index P = cache.points_per_sample;
  const Eigen::Index F = cache.point_features.cols();
  Matrix d_feat = Matrix::Zero(n * P, F);
  const double inv_p = 1.0 / static_cast<double>(P);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index f = 0; f < F; ++f) {
      d_feat(cache.argmax[static_cast<std::size_t>(i * F + f)], f) +=
          d_pooled(i, f);
      for (Eigen::Index p = 0; p < P; ++p) {
        d_feat(i * P + p, f) += d_pooled(i, F + f) * inv_p;
      }
    }
  }
  // Undo the extra ELU applied after the per-point trunk.
  Matrix d_pre =
      d_feat.cwiseProduct(elu_derivative_from_pre(cache.per_point.pre.back()));
  // The per-point trunk's own output is linear, so route straight through.
  GradList pp_grads;
  Matrix d_points = per_point_.backward(cache.per_point, d_pre, pp_grads);

  for (Matrix& g : pp_grads) grads.push_back(std::move(g));
  for (Matrix& g : post_grads) grads.push_back(std::move(g));
  return d_points;
}

std::vector<ParamRef> PointEncoder::params() {
  std::vector<ParamRef> out = per_point_.params();
  for (ParamRef& p : post_.params()) out.push_back(p);
  return out;
}

AdamW::AdamW(std::vector<ParamRef> params, const AdamWConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const ParamRef& p : params_) {
    m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void AdamW::step(const GradList& grads) {
  if (grads.size() != params_.size()) {
    throw std::runtime_error("AdamW: gradient list size mismatch");
  }
  step_count_ += 1;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = grads[i];
    if (!g.allFinite()) {
      throw std::runtime_error("AdamW: non-finite gradient for parameter " +
                               params_[i].name);
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m_[i] / bc1;
    const Matrix v_hat = v_[i] / bc2;
    Matrix& p = *params_[i].value;
    p.noalias() -= config_.learning_rate *
                   (m_hat.array() / (v_hat.array().sqrt() + config_.epsilon))
                       .matrix();
    if (config_.weight_decay != 0.0) {
      p -= config_.learning_rate * config_.weight_decay * p;
    }
  }
}

double clip_grad_norm(GradList& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Matrix& g : grads) g *= scale;
  }
  return norm;
}

double gradient_check(std::vector<ParamRef> params, const GradList& grads,
                      const std::function<double()>& loss_fn, RngStream& rng,
                      std::size_t min_coords, double h) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("gradient_check: list size mismatch");
  }
  std::size_t total = 0;
  for (const ParamRef& p : params) {
    total += static_cast<std::size_t>(p.value->size());
  }
  const std::size_t n_coords = std::min(total, min_coords);
  double max_rel = 0.0;
  for (std::size_t k = 0; k < n_coords; ++k) {
    std::size_t flat = static_cast<std::size_t>(rng.next_below(total));
    std::size_t pi = 0;
    while (flat >= static_cast<std::size_t>(params[pi].value->size())) {
      flat -= static_cast<std::size_t>(params[pi].value->size());
      ++pi;
    }
    double* coord = params[pi].value->data() + flat;
    const double saved = *coord;
    *coord = saved + h;
    const double plus = loss_fn();
    *coord = saved - h;
    const double minus = loss_fn();
    *coord = saved;
    const double fd = (plus - minus) / (2.0 * h);
    const double an = grads[pi].data()[flat];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - an) / denom);
  }
  return max_rel;
}

}  // namespace bidex::nn
