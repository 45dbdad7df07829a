#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

#include "robustft/autodiff.hpp"
#include "robustft/errors.hpp"

namespace robustft {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t n, c, h, w;  // input
  std::size_t f, k;        // filters, kernel size
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return c * k * k; }
  std::size_t out_area() const { return out_h * out_w; }
};

// cols is [C*k*k, out_h*out_w] for a single image.
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t area = g.out_area();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ch * g.k + ky) * g.k + kx) * area;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
            row[oy * g.out_w + ox] = inside ? img[(ch * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t area = g.out_area();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ch * g.k + ky) * g.k + kx) * area;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            img[(ch * g.h + iy) * g.w + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = input->value;
  const Tensor& wt = weight->value;
  if (x.rank() != 4) throw DimensionError("conv2d: input must be rank 4 [N,C,H,W], got " + shape_to_string(x.shape()));
  if (wt.rank() != 4) throw DimensionError("conv2d: weight must be rank 4 [F,C,k,k], got " + shape_to_string(wt.shape()));
  if (wt.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: channel axis 1 mismatch: input has " + std::to_string(x.dim(1)) +
                         ", weight expects " + std::to_string(wt.dim(1)));
  }
  if (wt.dim(2) != wt.dim(3)) {
    throw DimensionError("conv2d: weight kernel axes 2/3 must be square, got " + shape_to_string(wt.shape()));
  }
  if (bias->value.rank() != 1 || bias->value.dim(0) != wt.dim(0)) {
    throw DimensionError("conv2d: bias axis 0 must equal filter count " + std::to_string(wt.dim(0)) + ", got " +
                         shape_to_string(bias->value.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), wt.dim(0), wt.dim(2), stride, padding, 0, 0};
  if (g.k > g.h + 2 * g.pad) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.k) + " exceeds padded height axis 2 (" +
                         std::to_string(g.h + 2 * g.pad) + ")");
  }
  if (g.k > g.w + 2 * g.pad) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.k) + " exceeds padded width axis 3 (" +
                         std::to_string(g.w + 2 * g.pad) + ")");
  }
  g.out_h = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.out_w = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  Tensor out({g.n, g.f, g.out_h, g.out_w});
  AlignedBuffer cols(g.patch() * g.out_area());
  ConstMapMat w_mat(wt.raw(), g.f, g.patch());
  const Eigen::Map<const Eigen::VectorXd> b_vec(bias->value.raw(), g.f);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.raw() + n * g.c * g.h * g.w, g, cols.data());
    ConstMapMat col_mat(cols.data(), g.patch(), g.out_area());
    MapMat out_mat(out.raw() + n * g.f * g.out_area(), g.f, g.out_area());
    out_mat.noalias() = w_mat * col_mat;
    out_mat.colwise() += b_vec;
  }
  require_finite(out, "conv2d");

  return make_node(std::move(out), {input, weight, bias}, [g](Node& self) {
    const Var& in = self.parents[0];
    const Var& wn = self.parents[1];
    const Var& bn = self.parents[2];
    const Tensor& up = self.grad();
    AlignedBuffer cols(g.patch() * g.out_area());
    ConstMapMat w_mat(wn->value.raw(), g.f, g.patch());
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMapMat up_mat(up.raw() + n * g.f * g.out_area(), g.f, g.out_area());
      if (wn->requires_grad) {
        im2col(in->value.raw() + n * g.c * g.h * g.w, g, cols.data());
        ConstMapMat col_mat(cols.data(), g.patch(), g.out_area());
        MapMat gw(wn->grad().raw(), g.f, g.patch());
        gw.noalias() += up_mat * col_mat.transpose();
      }
      if (bn->requires_grad) {
        Eigen::Map<Eigen::VectorXd> gb(bn->grad().raw(), g.f);
        gb += up_mat.rowwise().sum();
      }
      if (in->requires_grad) {
        MapMat col_grad(cols.data(), g.patch(), g.out_area());
        col_grad.noalias() = w_mat.transpose() * up_mat;
        col2im_add(cols.data(), g, in->grad().raw() + n * g.c * g.h * g.w);
      }
    }
  });
}

Var maxpool2(const Var& x) {
  const Tensor& in = x->value;
  if (in.rank() != 4) throw DimensionError("maxpool2: input must be rank 4 [N,C,H,W], got " + shape_to_string(in.shape()));
  if (in.dim(2) % 2 != 0) throw DimensionError("maxpool2: height axis 2 is odd (" + std::to_string(in.dim(2)) + ")");
  if (in.dim(3) % 2 != 0) throw DimensionError("maxpool2: width axis 3 is odd (" + std::to_string(in.dim(3)) + ")");

  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        // Row-major window scan; strict '>' keeps the first maximum on ties.
        std::size_t best = base + (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * y + dy) * w + 2 * xx + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        argmax[o] = best;
        out[o] = in[best];
      }
    }
  }
  return make_node(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const Tensor& up = self.grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += up[i];
  });
}

Var dense(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& in = x->value;
  const Tensor& wt = weight->value;
  if (in.rank() != 2) throw DimensionError("dense: input must be rank 2 [N,D], got " + shape_to_string(in.shape()));
  if (wt.rank() != 2) throw DimensionError("dense: weight must be rank 2 [D,K], got " + shape_to_string(wt.shape()));
  if (in.dim(1) != wt.dim(0)) {
    throw DimensionError("dense: inner axis mismatch: input axis 1 is " + std::to_string(in.dim(1)) +
                         ", weight axis 0 is " + std::to_string(wt.dim(0)));
  }
  if (bias->value.rank() != 1 || bias->value.dim(0) != wt.dim(1)) {
    throw DimensionError("dense: bias axis 0 must equal " + std::to_string(wt.dim(1)) + ", got " +
                         shape_to_string(bias->value.shape()));
  }
  const std::size_t n = in.dim(0), d = in.dim(1), k = wt.dim(1);
  Tensor out({n, k});
  MapMat out_mat(out.raw(), n, k);
  out_mat.noalias() = ConstMapMat(in.raw(), n, d) * ConstMapMat(wt.raw(), d, k);
  out_mat.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.raw(), k);
  require_finite(out, "dense");

  return make_node(std::move(out), {x, weight, bias}, [n, d, k](Node& self) {
    const Var& xn = self.parents[0];
    const Var& wn = self.parents[1];
    const Var& bn = self.parents[2];
    ConstMapMat up(self.grad().raw(), n, k);
    if (xn->requires_grad) {
      MapMat(xn->grad().raw(), n, d).noalias() += up * ConstMapMat(wn->value.raw(), d, k).transpose();
    }
    if (wn->requires_grad) {
      MapMat(wn->grad().raw(), d, k).noalias() += ConstMapMat(xn->value.raw(), n, d).transpose() * up;
    }
    if (bn->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(bn->grad().raw(), k) += up.colwise().sum();
    }
  });
}

Var log_softmax(const Var& logits) {
  const Tensor& in = logits->value;
  if (in.rank() != 2) throw DimensionError("log_softmax: input must be rank 2 [N,K], got " + shape_to_string(in.shape()));
  const std::size_t n = in.dim(0), k = in.dim(1);
  if (k < 2) throw DimensionError("log_softmax: class axis 1 must be >= 2, got " + std::to_string(k));
  Tensor out({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, in.at(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(in.at(r, j) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) out.at(r, j) = in.at(r, j) - lz;
  }
  require_finite(out, "log_softmax");
  return make_node(std::move(out), {logits}, [n, k](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const Tensor& up = self.grad();
    const Tensor& lp = self.value;
    for (std::size_t r = 0; r < n; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += up.at(r, j);
      for (std::size_t j = 0; j < k; ++j) g.at(r, j) += up.at(r, j) - std::exp(lp.at(r, j)) * total;
    }
  });
}

}  // namespace robustft
