#include "stereopose/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>

#include "stereopose/rng.hpp"

namespace stereopose {

namespace {

using kernels::ConstMatrixRef;
using kernels::Matrix;
using kernels::MatrixRef;
namespace par = kernels::parallel;

constexpr double kLayerNormEps = 1e-5;
constexpr double kRotationEps = 1e-8;
const Vec3 kPositionScale(200.0, 200.0, 500.0);
const Vec3 kPositionOffset(0.0, 0.0, 950.0);
constexpr double kArticulationScale = std::numbers::pi / 4.0;
constexpr double kArticulationOffset = std::numbers::pi / 4.0;
const Rot6 kRot6Offset = (Rot6() << 1, 0, 0, 0, 1, 0).finished();

// Tensor order inside the flat buffer.
enum Top : std::size_t { kEmbedW = 0, kEmbedB = 1, kFirstLayer = 2 };
enum LayerSlot : std::size_t {
  kLn1G, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2, kLayerTensors
};

struct Ids {
  std::size_t layers;
  std::size_t layer(std::size_t l, LayerSlot s) const { return kFirstLayer + l * kLayerTensors + s; }
  std::size_t lnf_g() const { return kFirstLayer + layers * kLayerTensors; }
  std::size_t lnf_b() const { return lnf_g() + 1; }
  std::size_t kp_w() const { return lnf_g() + 2; }
  std::size_t kp_b() const { return lnf_g() + 3; }
  std::size_t pose_w() const { return lnf_g() + 4; }
  std::size_t pose_b() const { return lnf_g() + 5; }
};

bool is_layer_norm_scale(const std::string& name) { return name.ends_with(".gamma"); }
bool is_bias(const std::string& name) { return name.ends_with(".bias") || name.ends_with(".beta"); }

std::vector<TensorInfo> layout(const ModelConfig& c) {
  const std::size_t d = c.hidden_dim, f = c.feature_dim(), dff = static_cast<std::size_t>(c.hidden_dim) * c.ffn_multiplier;
  std::vector<TensorInfo> t;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    t.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  add("embed.weight", f, d);
  add("embed.bias", 1, d);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.gamma", 1, d);
    add(p + "ln1.beta", 1, d);
    add(p + "attn.q.weight", d, d);
    add(p + "attn.q.bias", 1, d);
    add(p + "attn.k.weight", d, d);
    add(p + "attn.k.bias", 1, d);
    add(p + "attn.v.weight", d, d);
    add(p + "attn.v.bias", 1, d);
    add(p + "attn.out.weight", d, d);
    add(p + "attn.out.bias", 1, d);
    add(p + "ln2.gamma", 1, d);
    add(p + "ln2.beta", 1, d);
    add(p + "ffn.in.weight", d, dff);
    add(p + "ffn.in.bias", 1, dff);
    add(p + "ffn.out.weight", dff, d);
    add(p + "ffn.out.bias", 1, d);
  }
  add("final_ln.gamma", 1, d);
  add("final_ln.beta", 1, d);
  add("keypoint_head.weight", d, 3);
  add("keypoint_head.bias", 1, 3);
  add("pose_head.weight", d, c.pose_dim());
  add("pose_head.bias", 1, c.pose_dim());
  return t;
}

// ---------------------------------------------------------------------------
// Row-wise helpers

void add_bias(MatrixRef y, const double* bias) {
  for (std::size_t i = 0; i < y.rows; ++i) {
    double* row = y.data + i * y.cols;
    for (std::size_t j = 0; j < y.cols; ++j) row[j] += bias[j];
  }
}

// y = x w + b
void linear(ConstMatrixRef x, ConstMatrixRef w, const double* b, MatrixRef y) {
  par::gemm_nn(x, w, y);
  add_bias(y, b);
}

// Accumulates dw += x^T dy, db += colsum(dy); writes or adds dx = dy w^T.
void linear_backward(ConstMatrixRef x, ConstMatrixRef w, ConstMatrixRef dy, MatrixRef dw, double* db, MatrixRef* dx,
                     bool accumulate_dx) {
  par::gemm_tn(x, dy, dw, true);
  par::column_sums(dy, {db, dy.cols}, true);
  if (dx) par::gemm_nt(dy, w, *dx, accumulate_dx);
}

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

void layer_norm(ConstMatrixRef x, const double* gamma, const double* beta, LayerNormCache& cache, MatrixRef y) {
  const std::size_t n = x.rows, d = x.cols;
  cache.xhat.resize(n, d);
  cache.rstd.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[i] = rstd;
    double* xh = cache.xhat.row(i);
    double* out = y.data + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (row[j] - mean) * rstd;
      out[j] = xh[j] * gamma[j] + beta[j];
    }
  }
}

// dx += LN'(dy); dgamma, dbeta accumulate.
void layer_norm_backward(ConstMatrixRef dy, const LayerNormCache& cache, const double* gamma, MatrixRef dx,
                         double* dgamma, double* dbeta) {
  const std::size_t n = dy.rows, d = dy.cols;
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = dy.data + i * d;
    const double* xh = cache.xhat.row(i);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dxhat[j] = g[j] * gamma[j];
      m1 += dxhat[j];
      m2 += dxhat[j] * xh[j];
      dgamma[j] += g[j] * xh[j];
      dbeta[j] += g[j];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double* out = dx.data + i * d;
    for (std::size_t j = 0; j < d; ++j) out[j] += cache.rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
  }
}

// Standard normal CDF; gelu(u) = u * cdf(u).
double normal_cdf(double u) { return 0.5 * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double u, double cdf) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return cdf + u * kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

// ---------------------------------------------------------------------------
// Network

struct LayerCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix h1, q, k, v;
  std::vector<double> probs;  // objects x heads x 13 x 13
  Matrix o;
  Matrix x_mid;
  LayerNormCache ln2;
  Matrix h2, u, cdf, g;
};

struct ForwardCache {
  std::size_t objects = 0;
  ConstMatrixRef tokens;
  std::vector<LayerCache> layers;
  Matrix x_out;
  LayerNormCache lnf;
  Matrix z;
  Matrix kp_raw, pose_raw;
};

void attention(const ModelConfig& c, LayerCache& L, std::size_t objects) {
  const std::size_t d = c.hidden_dim, heads = c.heads, dh = d / heads;
  constexpr std::size_t T = kTokensPerObject;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  L.probs.assign(objects * heads * T * T, 0.0);
  L.o.resize(objects * T, d);
#pragma omp parallel for schedule(static) if (objects >= 8)
  for (std::size_t s = 0; s < objects; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* a = L.probs.data() + (s * heads + h) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        const double* qi = L.q.row(s * T + i) + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
          const double* kj = L.k.row(s * T + j) + h * dh;
          double dot = 0.0;
          for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
          a[i * T + j] = dot * scale;
          mx = std::max(mx, a[i * T + j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          a[i * T + j] = std::exp(a[i * T + j] - mx);
          sum += a[i * T + j];
        }
        for (std::size_t j = 0; j < T; ++j) a[i * T + j] /= sum;
        double* oi = L.o.row(s * T + i) + h * dh;
        for (std::size_t j = 0; j < T; ++j) {
          const double w = a[i * T + j];
          const double* vj = L.v.row(s * T + j) + h * dh;
          for (std::size_t e = 0; e < dh; ++e) oi[e] += w * vj[e];
        }
      }
    }
  }
}

void attention_backward(const ModelConfig& c, const LayerCache& L, std::size_t objects, const Matrix& d_o, Matrix& dq,
                        Matrix& dk, Matrix& dv) {
  const std::size_t d = c.hidden_dim, heads = c.heads, dh = d / heads;
  constexpr std::size_t T = kTokensPerObject;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq.resize(objects * T, d);
  dk.resize(objects * T, d);
  dv.resize(objects * T, d);
#pragma omp parallel for schedule(static) if (objects >= 8)
  for (std::size_t s = 0; s < objects; ++s) {
    double da[T * T];
    for (std::size_t h = 0; h < heads; ++h) {
      const double* a = L.probs.data() + (s * heads + h) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        const double* doi = d_o.row(s * T + i) + h * dh;
        double rowdot = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          const double* vj = L.v.row(s * T + j) + h * dh;
          double dot = 0.0;
          for (std::size_t e = 0; e < dh; ++e) dot += doi[e] * vj[e];
          da[i * T + j] = dot;
          rowdot += dot * a[i * T + j];
        }
        for (std::size_t j = 0; j < T; ++j) da[i * T + j] = a[i * T + j] * (da[i * T + j] - rowdot) * scale;
      }
      // dv_j = sum_i a_ij do_i ; dq_i = sum_j ds_ij k_j ; dk_j = sum_i ds_ij q_i
      for (std::size_t j = 0; j < T; ++j) {
        double* dvj = dv.row(s * T + j) + h * dh;
        double* dkj = dk.row(s * T + j) + h * dh;
        for (std::size_t i = 0; i < T; ++i) {
          const double w = a[i * T + j], ws = da[i * T + j];
          const double* doi = d_o.row(s * T + i) + h * dh;
          const double* qi = L.q.row(s * T + i) + h * dh;
          for (std::size_t e = 0; e < dh; ++e) {
            dvj[e] += w * doi[e];
            dkj[e] += ws * qi[e];
          }
        }
      }
      for (std::size_t i = 0; i < T; ++i) {
        double* dqi = dq.row(s * T + i) + h * dh;
        for (std::size_t j = 0; j < T; ++j) {
          const double ws = da[i * T + j];
          const double* kj = L.k.row(s * T + j) + h * dh;
          for (std::size_t e = 0; e < dh; ++e) dqi[e] += ws * kj[e];
        }
      }
    }
  }
}

void run_forward(const TransformerParams& p, ConstMatrixRef tokens, ForwardCache& fc) {
  const ModelConfig& c = p.config;
  if (tokens.cols != static_cast<std::size_t>(c.feature_dim()) || tokens.rows % kTokensPerObject != 0)
    throw ShapeMismatch("token matrix is " + std::to_string(tokens.rows) + "x" + std::to_string(tokens.cols) +
                        ", expected rows in multiples of 13 and " + std::to_string(c.feature_dim()) + " columns");
  const Ids ids{static_cast<std::size_t>(c.layers)};
  const std::size_t n = tokens.rows, d = c.hidden_dim, dff = d * c.ffn_multiplier;
  fc.objects = n / kTokensPerObject;
  fc.tokens = tokens;
  fc.layers.resize(c.layers);

  Matrix& x = fc.x_out;
  x.resize(n, d);
  linear(tokens, p.view(kEmbedW), p.view(kEmbedB).data, x.ref());
  for (int l = 0; l < c.layers; ++l) {
    LayerCache& L = fc.layers[l];
    auto P = [&](LayerSlot s) { return p.view(ids.layer(l, s)); };
    std::swap(L.x_in, x);
    L.h1.resize(n, d);
    layer_norm(L.x_in.cref(), P(kLn1G).data, P(kLn1B).data, L.ln1, L.h1.ref());
    L.q.resize(n, d);
    L.k.resize(n, d);
    L.v.resize(n, d);
    linear(L.h1.cref(), P(kWq), P(kBq).data, L.q.ref());
    linear(L.h1.cref(), P(kWk), P(kBk).data, L.k.ref());
    linear(L.h1.cref(), P(kWv), P(kBv).data, L.v.ref());
    attention(c, L, fc.objects);
    L.x_mid.resize(n, d);
    std::copy_n(L.x_in.data(), L.x_in.size(), L.x_mid.data());
    par::gemm_nn(L.o.cref(), P(kWo), L.x_mid.ref(), true);
    add_bias(L.x_mid.ref(), P(kBo).data);
    L.h2.resize(n, d);
    layer_norm(L.x_mid.cref(), P(kLn2G).data, P(kLn2B).data, L.ln2, L.h2.ref());
    L.u.resize(n, dff);
    linear(L.h2.cref(), P(kW1), P(kB1).data, L.u.ref());
    L.cdf.resize(n, dff);
    L.g.resize(n, dff);
    for (std::size_t i = 0; i < L.u.size(); ++i) {
      L.cdf.data()[i] = normal_cdf(L.u.data()[i]);
      L.g.data()[i] = L.u.data()[i] * L.cdf.data()[i];
    }
    x.resize(n, d);
    std::copy_n(L.x_mid.data(), L.x_mid.size(), x.data());
    par::gemm_nn(L.g.cref(), P(kW2), x.ref(), true);
    add_bias(x.ref(), P(kB2).data);
  }
  fc.z.resize(n, d);
  layer_norm(fc.x_out.cref(), p.view(ids.lnf_g()).data, p.view(ids.lnf_b()).data, fc.lnf, fc.z.ref());
  fc.kp_raw.resize(n, 3);
  linear(fc.z.cref(), p.view(ids.kp_w()), p.view(ids.kp_b()).data, fc.kp_raw.ref());
  fc.pose_raw.resize(n, c.pose_dim());
  linear(fc.z.cref(), p.view(ids.pose_w()), p.view(ids.pose_b()).data, fc.pose_raw.ref());
}

RawOutput extract(const ModelConfig& c, const ForwardCache& fc, std::size_t s) {
  RawOutput out;
  for (int k = 0; k < kKeypointCount; ++k) {
    const double* r = fc.kp_raw.row(s * kTokensPerObject + k);
    out.keypoints[k] = Vec3(r[0], r[1], r[2]);
  }
  const double* r = fc.pose_raw.row(s * kTokensPerObject + kKeypointCount);
  out.pose.assign(r, r + c.pose_dim());
  return out;
}

// Backward from output gradients stored in d_kp (n x 3) and d_pose (n x pose_dim).
void run_backward(const TransformerParams& p, const ForwardCache& fc, const Matrix& d_kp, const Matrix& d_pose,
                  std::span<double> grad) {
  const ModelConfig& c = p.config;
  const Ids ids{static_cast<std::size_t>(c.layers)};
  const std::size_t n = fc.x_out.rows(), d = c.hidden_dim, dff = d * c.ffn_multiplier;
  auto G = [&](std::size_t index) {
    const auto& t = p.tensors[index];
    return MatrixRef{grad.data() + t.offset, t.rows, t.cols};
  };

  thread_local Matrix dz, dx, dg, dh, d_o, dq, dk, dv;
  dz.resize(n, d);
  MatrixRef dz_ref = dz.ref();
  linear_backward(fc.z.cref(), p.view(ids.kp_w()), d_kp.cref(), G(ids.kp_w()), G(ids.kp_b()).data, &dz_ref, false);
  linear_backward(fc.z.cref(), p.view(ids.pose_w()), d_pose.cref(), G(ids.pose_w()), G(ids.pose_b()).data, &dz_ref,
                  true);
  dx.resize(n, d);
  layer_norm_backward(dz.cref(), fc.lnf, p.view(ids.lnf_g()).data, dx.ref(), G(ids.lnf_g()).data,
                      G(ids.lnf_b()).data);

  dg.resize(n, dff);
  dh.resize(n, d);
  d_o.resize(n, d);
  for (int l = c.layers - 1; l >= 0; --l) {
    const LayerCache& L = fc.layers[l];
    auto P = [&](LayerSlot s) { return p.view(ids.layer(l, s)); };
    auto Gl = [&](LayerSlot s) { return G(ids.layer(l, s)); };

    // x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
    MatrixRef dg_ref = dg.ref();
    linear_backward(L.g.cref(), P(kW2), dx.cref(), Gl(kW2), Gl(kB2).data, &dg_ref, false);
    for (std::size_t i = 0; i < dg.size(); ++i) dg.data()[i] *= gelu_grad(L.u.data()[i], L.cdf.data()[i]);
    MatrixRef dh_ref = dh.ref();
    linear_backward(L.h2.cref(), P(kW1), dg.cref(), Gl(kW1), Gl(kB1).data, &dh_ref, false);
    layer_norm_backward(dh.cref(), L.ln2, P(kLn2G).data, dx.ref(), Gl(kLn2G).data, Gl(kLn2B).data);

    // x_mid = x_in + attn(h1) Wo + bo
    MatrixRef do_ref = d_o.ref();
    linear_backward(L.o.cref(), P(kWo), dx.cref(), Gl(kWo), Gl(kBo).data, &do_ref, false);
    attention_backward(c, L, fc.objects, d_o, dq, dk, dv);
    linear_backward(L.h1.cref(), P(kWq), dq.cref(), Gl(kWq), Gl(kBq).data, &dh_ref, false);
    linear_backward(L.h1.cref(), P(kWk), dk.cref(), Gl(kWk), Gl(kBk).data, &dh_ref, true);
    linear_backward(L.h1.cref(), P(kWv), dv.cref(), Gl(kWv), Gl(kBv).data, &dh_ref, true);
    layer_norm_backward(dh.cref(), L.ln1, P(kLn1G).data, dx.ref(), Gl(kLn1G).data, Gl(kLn1B).data);
  }
  linear_backward(fc.tokens, p.view(kEmbedW), dx.cref(), G(kEmbedW), G(kEmbedB).data, nullptr, false);
}

Mat3 pose_rotation(const ModelConfig& c, std::span<const double> raw, GramSchmidtCache* cache) {
  if (c.rotation_mode == RotationMode::SixD) {
    Rot6 r6;
    for (int i = 0; i < 6; ++i) r6[i] = raw[3 + i] + kRot6Offset[i];
    return rot6d_to_matrix_smooth(r6, kRotationEps, cache);
  }
  return axis_angle_to_matrix(Vec3(raw[3], raw[4], raw[5])).matrix();
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (layers < 1) throw InvalidArgument("layers must be >= 1");
  if (hidden_dim < 1 || heads < 1 || hidden_dim % heads != 0)
    throw InvalidArgument("hidden_dim must be a positive multiple of heads");
  if (ffn_multiplier < 1) throw InvalidArgument("ffn_multiplier must be >= 1");
  if (class_count < 1) throw InvalidArgument("class_count must be >= 1");
  if (w_pose < 0.0 || w_vertex < 0.0 || w_kp3d < 0.0) throw InvalidArgument("loss weights must be >= 0");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.layers == b.layers && a.hidden_dim == b.hidden_dim && a.heads == b.heads &&
         a.ffn_multiplier == b.ffn_multiplier && a.modality == b.modality && a.keypoint_onehot == b.keypoint_onehot &&
         a.rotation_mode == b.rotation_mode && a.class_count == b.class_count && a.w_pose == b.w_pose &&
         a.w_vertex == b.w_vertex && a.w_kp3d == b.w_kp3d;
}

const TensorInfo& TransformerParams::tensor(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw InvalidArgument("no tensor named '" + std::string(name) + "'");
}

TransformerParams make_params(const ModelConfig& config) {
  config.validate();
  TransformerParams p;
  p.config = config;
  p.tensors = layout(config);
  const auto& last = p.tensors.back();
  p.values.assign(last.offset + last.size(), 0.0);
  for (const auto& t : p.tensors)
    if (is_layer_norm_scale(t.name)) std::fill_n(p.values.begin() + t.offset, t.size(), 1.0);
  return p;
}

TransformerParams init_params(const ModelConfig& config, std::uint64_t seed) {
  TransformerParams p = make_params(config);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& t = p.tensors[i];
    if (is_layer_norm_scale(t.name) || is_bias(t.name)) continue;
    Rng rng = Rng::stream(seed, i);
    const double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    for (std::size_t j = 0; j < t.size(); ++j) p.values[t.offset + j] = rng.uniform(-a, a);
  }
  return p;
}

bool all_finite(const TransformerParams& params) {
  return std::all_of(params.values.begin(), params.values.end(), [](double v) { return std::isfinite(v); });
}

void tokenize_into(const StereoObservation& obs, const ModelConfig& config, const CameraRig& rig, double* rows) {
  if (obs.class_id < 0 || obs.class_id >= config.class_count)
    throw ClassOutOfRange("class " + std::to_string(obs.class_id) + " outside [0, " +
                          std::to_string(config.class_count) + ")");
  const int f = config.feature_dim();
  const int class_col = 5 + (config.keypoint_onehot ? kKeypointCount : 0);
  std::fill_n(rows, static_cast<std::size_t>(kTokensPerObject) * f, 0.0);
  const double w = rig.image_width, h = rig.image_height;
  for (int k = 0; k < kKeypointCount; ++k) {
    double* row = rows + static_cast<std::size_t>(k) * f;
    const auto& kp = obs.keypoints[k];
    if (kp.visible) {
      row[0] = kp.u_left / w;
      row[1] = kp.v_left / h;
      if (config.modality == Modality::Stereo) {
        row[2] = kp.u_right / w;
        row[3] = kp.v_right / h;
      }
      row[4] = 1.0;
    }
    if (config.keypoint_onehot) row[5 + k] = 1.0;
    row[class_col + obs.class_id] = 1.0;
  }
  double* pose_row = rows + static_cast<std::size_t>(kKeypointCount) * f;
  pose_row[class_col + obs.class_id] = 1.0;
  pose_row[f - 1] = 1.0;
}

Matrix tokenize(const StereoObservation& obs, const ModelConfig& config, const CameraRig& rig) {
  Matrix m(kTokensPerObject, config.feature_dim());
  tokenize_into(obs, config, rig, m.data());
  return m;
}

std::vector<RawOutput> forward(const TransformerParams& params, ConstMatrixRef tokens) {
  thread_local ForwardCache fc;
  run_forward(params, tokens, fc);
  std::vector<RawOutput> out;
  out.reserve(fc.objects);
  for (std::size_t s = 0; s < fc.objects; ++s) out.push_back(extract(params.config, fc, s));
  return out;
}

RawOutput forward(const TransformerParams& params, const Matrix& tokens) {
  if (tokens.rows() != static_cast<std::size_t>(kTokensPerObject)) throw ShapeMismatch("expected one object (13 tokens)");
  return forward(params, tokens.cref()).front();
}

Pose7D Prediction::pose() const {
  Pose7D p;
  p.translation = translation;
  p.rotation6 = matrix_to_rot6d(rotation);
  p.articulation = std::clamp(articulation, 0.0, kMaxArticulation);
  return p;
}

Prediction decode(const ModelConfig& config, const RawOutput& raw) {
  if (raw.pose.size() != static_cast<std::size_t>(config.pose_dim())) throw ShapeMismatch("pose output width");
  Prediction out;
  for (int k = 0; k < kKeypointCount; ++k)
    out.keypoints3d[k] = raw.keypoints[k].cwiseProduct(kPositionScale) + kPositionOffset;
  out.translation = Vec3(raw.pose[0], raw.pose[1], raw.pose[2]).cwiseProduct(kPositionScale) + kPositionOffset;
  out.rotation = pose_rotation(config, raw.pose, nullptr);
  out.articulation = raw.pose.back() * kArticulationScale + kArticulationOffset;
  return out;
}

RawOutput encode(const ModelConfig& config, const Pose7D& pose, std::span<const Vec3> keypoints3d) {
  if (keypoints3d.size() != static_cast<std::size_t>(kKeypointCount)) throw ShapeMismatch("encode needs 12 keypoints");
  RawOutput raw;
  for (int k = 0; k < kKeypointCount; ++k)
    raw.keypoints[k] = (keypoints3d[k] - kPositionOffset).cwiseQuotient(kPositionScale);
  raw.pose.assign(config.pose_dim(), 0.0);
  const Vec3 t = (pose.translation - kPositionOffset).cwiseQuotient(kPositionScale);
  for (int i = 0; i < 3; ++i) raw.pose[i] = t[i];
  if (config.rotation_mode == RotationMode::SixD) {
    for (int i = 0; i < 6; ++i) raw.pose[3 + i] = pose.rotation6[i] - kRot6Offset[i];
  } else {
    const Vec3 aa = matrix_to_axis_angle(rot6d_to_matrix(pose.rotation6).matrix());
    for (int i = 0; i < 3; ++i) raw.pose[3 + i] = aa[i];
  }
  raw.pose.back() = (pose.articulation - kArticulationOffset) / kArticulationScale;
  return raw;
}

std::vector<Prediction> predict(const TransformerParams& params, std::span<const StereoObservation> observations,
                                const CameraRig& rig) {
  const ModelConfig& c = params.config;
  const std::size_t f = c.feature_dim();
  Matrix tokens(observations.size() * kTokensPerObject, f);
  for (std::size_t s = 0; s < observations.size(); ++s)
    tokenize_into(observations[s], c, rig, tokens.row(s * kTokensPerObject));
  std::vector<Prediction> out;
  out.reserve(observations.size());
  for (const auto& raw : forward(params, tokens.cref())) out.push_back(decode(c, raw));
  return out;
}

LossTerms output_loss(const ModelConfig& config, const RawOutput& raw, const DatasetRecord& record,
                      const InstrumentModel& model, RawOutput* grad) {
  const int rd = config.rotation_dim();
  const Mat3 r_gt = rot6d_to_matrix(record.pose.rotation6).matrix();

  // Flattened pose vectors.
  std::vector<double> p_hat(config.pose_dim()), p_gt(config.pose_dim());
  const Vec3 t_hat = Vec3(raw.pose[0], raw.pose[1], raw.pose[2]).cwiseProduct(kPositionScale) + kPositionOffset;
  const double theta_hat = raw.pose.back() * kArticulationScale + kArticulationOffset;
  for (int i = 0; i < 3; ++i) {
    p_hat[i] = t_hat[i];
    p_gt[i] = record.pose.translation[i];
  }
  if (config.rotation_mode == RotationMode::SixD) {
    for (int i = 0; i < 6; ++i) {
      p_hat[3 + i] = raw.pose[3 + i] + kRot6Offset[i];
      p_gt[3 + i] = record.pose.rotation6[i];
    }
  } else {
    const Vec3 aa = matrix_to_axis_angle(r_gt);
    for (int i = 0; i < 3; ++i) {
      p_hat[3 + i] = raw.pose[3 + i];
      p_gt[3 + i] = aa[i];
    }
  }
  p_hat[3 + rd] = theta_hat;
  p_gt[3 + rd] = record.pose.articulation;

  LossTerms terms;
  double pose_norm = 0.0;
  for (std::size_t i = 0; i < p_hat.size(); ++i) pose_norm += (p_hat[i] - p_gt[i]) * (p_hat[i] - p_gt[i]);
  pose_norm = std::sqrt(pose_norm);
  terms.pose = pose_norm;

  GramSchmidtCache gs;
  const Mat3 r_hat = pose_rotation(config, raw.pose, &gs);
  const auto v_hat = apply_pose(r_hat, t_hat, theta_hat, model, PointSet::Surface);
  const auto v_gt = apply_pose(r_gt, record.pose.translation, record.pose.articulation, model, PointSet::Surface);
  const double nv = static_cast<double>(v_hat.size());
  std::vector<Vec3> v_grad(v_hat.size(), Vec3::Zero());
  for (std::size_t i = 0; i < v_hat.size(); ++i) {
    const Vec3 diff = v_hat[i] - v_gt[i];
    const double dist = diff.norm();
    terms.vertex += dist;
    if (dist > 0.0) v_grad[i] = diff * (config.w_vertex / (dist * nv));
  }
  terms.vertex /= nv;

  std::array<Vec3, kKeypointCount> k_hat;
  for (int k = 0; k < kKeypointCount; ++k) {
    k_hat[k] = raw.keypoints[k].cwiseProduct(kPositionScale) + kPositionOffset;
    terms.kp3d += (k_hat[k] - record.keypoints3d[k]).norm();
  }
  terms.kp3d /= kKeypointCount;
  terms.total = config.w_pose * terms.pose + config.w_vertex * terms.vertex + config.w_kp3d * terms.kp3d;

  if (!grad) return terms;

  grad->pose.assign(config.pose_dim(), 0.0);
  std::vector<double> dp(p_hat.size(), 0.0);
  if (pose_norm > 0.0)
    for (std::size_t i = 0; i < p_hat.size(); ++i) dp[i] = config.w_pose * (p_hat[i] - p_gt[i]) / pose_norm;

  PoseGradient pg;
  apply_pose_backward(r_hat, theta_hat, model, PointSet::Surface, v_grad, pg);
  for (int i = 0; i < 3; ++i) grad->pose[i] = (dp[i] + pg.translation[i]) * kPositionScale[i];
  if (config.rotation_mode == RotationMode::SixD) {
    const Rot6 dr = rot6d_backward(gs, pg.rotation);
    for (int i = 0; i < 6; ++i) grad->pose[3 + i] = dp[3 + i] + dr[i];
  } else {
    const Vec3 da = axis_angle_backward(Vec3(raw.pose[3], raw.pose[4], raw.pose[5]), pg.rotation);
    for (int i = 0; i < 3; ++i) grad->pose[3 + i] = dp[3 + i] + da[i];
  }
  grad->pose.back() = (dp[3 + rd] + pg.articulation) * kArticulationScale;

  for (int k = 0; k < kKeypointCount; ++k) {
    const Vec3 diff = k_hat[k] - record.keypoints3d[k];
    const double dist = diff.norm();
    grad->keypoints[k] = Vec3::Zero();
    if (dist > 0.0) grad->keypoints[k] = (diff * (config.w_kp3d / (dist * kKeypointCount))).cwiseProduct(kPositionScale);
  }
  return terms;
}

LossTerms batch_loss(const TransformerParams& params, std::span<const DatasetRecord* const> records,
                     const std::vector<InstrumentModel>& models, const CameraRig& rig, std::span<double> gradient) {
  const ModelConfig& c = params.config;
  const bool want_grad = !gradient.empty();
  if (want_grad && gradient.size() != params.values.size()) throw ShapeMismatch("gradient buffer size");
  const std::size_t n = records.size();
  Matrix tokens(n * kTokensPerObject, c.feature_dim());
  for (std::size_t s = 0; s < n; ++s) tokenize_into(records[s]->observation, c, rig, tokens.row(s * kTokensPerObject));

  thread_local ForwardCache fc;
  run_forward(params, tokens.cref(), fc);

  std::vector<LossTerms> per(n);
  Matrix d_kp(n * kTokensPerObject, 3), d_pose(n * kTokensPerObject, c.pose_dim());
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(static) if (n >= 8)
  for (std::size_t s = 0; s < n; ++s) {
    try {
      const RawOutput raw = extract(c, fc, s);
      RawOutput g;
      per[s] = output_loss(c, raw, *records[s], model_for_class(models, records[s]->class_id), want_grad ? &g : nullptr);
      if (want_grad) {
        for (int k = 0; k < kKeypointCount; ++k)
          for (int i = 0; i < 3; ++i) d_kp(s * kTokensPerObject + k, i) = g.keypoints[k][i];
        for (int i = 0; i < c.pose_dim(); ++i) d_pose(s * kTokensPerObject + kKeypointCount, i) = g.pose[i];
      }
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  LossTerms total;
  for (const auto& t : per) total += t;
  if (want_grad) run_backward(params, fc, d_kp, d_pose, gradient);
  return total;
}

LossResult loss(const TransformerParams& params, const DatasetRecord& record, const InstrumentModel& model,
                const CameraRig& rig) {
  const ModelConfig& c = params.config;
  const Matrix tokens = tokenize(record.observation, c, rig);
  thread_local ForwardCache fc;
  run_forward(params, tokens.cref(), fc);
  RawOutput g;
  LossResult result;
  result.terms = output_loss(c, extract(c, fc, 0), record, model, &g);
  Matrix d_kp(kTokensPerObject, 3), d_pose(kTokensPerObject, c.pose_dim());
  for (int k = 0; k < kKeypointCount; ++k)
    for (int i = 0; i < 3; ++i) d_kp(k, i) = g.keypoints[k][i];
  for (int i = 0; i < c.pose_dim(); ++i) d_pose(kKeypointCount, i) = g.pose[i];
  result.gradient.assign(params.values.size(), 0.0);
  run_backward(params, fc, d_kp, d_pose, result.gradient);
  return result;
}

}  // namespace stereopose
