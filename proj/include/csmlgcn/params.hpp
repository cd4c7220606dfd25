#pragma once

#include <string>
#include <vector>

#include "csmlgcn/autodiff.hpp"
#include "csmlgcn/types.hpp"

namespace csmlgcn {

// Parameter containers are templated on their element so the same layout
// holds weights (Matrix), tape handles during a pass (Var), gradients and
// optimizer moments.

// One propagation layer: self weights, neighbor weights, 1 x d_out bias.
template <typename T>
struct EncoderLayerT {
  T w_self;
  T w_neigh;
  T bias;
};

template <typename T>
struct EncoderT {
  std::vector<EncoderLayerT<T>> layers;
};

// One square d_out x d_out matrix per view.
template <typename T>
struct AttentionT {
  std::vector<T> weights;
};

// psi = sigmoid(relu(zeta W1 + b1) W2 + b2)
template <typename T>
struct HeadT {
  T w1;
  T b1;
  T w2;
  T b2;
};

template <typename T>
struct ModelT {
  std::vector<EncoderT<T>> view_encoders;   // one per layer of the graph
  std::vector<EncoderT<T>> query_encoders;  // one per layer of the graph
  AttentionT<T> attention;
  HeadT<T> head;

  Index view_count() const { return static_cast<Index>(view_encoders.size()); }

  // Visits every array with a stable dotted name, in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& m, F& f) {
    auto encoder = [&f](auto& enc, const std::string& prefix) {
      for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const std::string base = prefix + ".layer" + std::to_string(l);
        f(base + ".w_self", enc.layers[l].w_self);
        f(base + ".w_neigh", enc.layers[l].w_neigh);
        f(base + ".bias", enc.layers[l].bias);
      }
    };
    for (std::size_t r = 0; r < m.view_encoders.size(); ++r) {
      encoder(m.view_encoders[r], "view_encoder." + std::to_string(r));
    }
    for (std::size_t r = 0; r < m.query_encoders.size(); ++r) {
      encoder(m.query_encoders[r], "query_encoder." + std::to_string(r));
    }
    for (std::size_t r = 0; r < m.attention.weights.size(); ++r) {
      f("attention." + std::to_string(r), m.attention.weights[r]);
    }
    f(std::string("head.w1"), m.head.w1);
    f(std::string("head.b1"), m.head.b1);
    f(std::string("head.w2"), m.head.w2);
    f(std::string("head.b2"), m.head.b2);
  }
};

// Element-wise structural map: same layout, new element type.
template <typename U, typename T, typename F>
EncoderT<U> map_encoder(const EncoderT<T>& e, F&& f) {
  EncoderT<U> out;
  out.layers.reserve(e.layers.size());
  for (const auto& l : e.layers) out.layers.push_back({f(l.w_self), f(l.w_neigh), f(l.bias)});
  return out;
}

template <typename U, typename T, typename F>
ModelT<U> map_model(const ModelT<T>& m, F&& f) {
  ModelT<U> out;
  for (const auto& e : m.view_encoders) out.view_encoders.push_back(map_encoder<U>(e, f));
  for (const auto& e : m.query_encoders) out.query_encoders.push_back(map_encoder<U>(e, f));
  for (const auto& w : m.attention.weights) out.attention.weights.push_back(f(w));
  out.head = {f(m.head.w1), f(m.head.b1), f(m.head.w2), f(m.head.b2)};
  return out;
}

using EncoderLayerParams = EncoderLayerT<Matrix>;
using EncoderParams = EncoderT<Matrix>;
using ViewEncoderParams = EncoderT<Matrix>;
using QueryEncoderParams = EncoderT<Matrix>;
using AttentionParams = AttentionT<Matrix>;
using HeadParams = HeadT<Matrix>;
using ModelParams = ModelT<Matrix>;

template <typename Scalar>
using EncoderVarsT = EncoderT<BasicVar<Scalar>>;
template <typename Scalar>
using AttentionVarsT = AttentionT<BasicVar<Scalar>>;
template <typename Scalar>
using HeadVarsT = HeadT<BasicVar<Scalar>>;
template <typename Scalar>
using ModelVarsT = ModelT<BasicVar<Scalar>>;

using EncoderVars = EncoderVarsT<double>;
using AttentionVars = AttentionVarsT<double>;
using HeadVars = HeadVarsT<double>;
using ModelVars = ModelVarsT<double>;

// Puts every weight on the tape, as variables or as constants, converted to
// the tape's scalar.
template <typename Scalar>
ModelVarsT<Scalar> bind(BasicTape<Scalar>& tape, const ModelParams& params, bool trainable) {
  return map_model<BasicVar<Scalar>>(params, [&](const Matrix& m) {
    MatrixX<Scalar> v = m.template cast<Scalar>();
    return trainable ? tape.variable(std::move(v)) : tape.constant(std::move(v));
  });
}

// Gradients of every bound weight, widened back to double.
template <typename Scalar>
ModelParams gradients(BasicTape<Scalar>& tape, const ModelVarsT<Scalar>& vars) {
  return map_model<Matrix>(vars, [&](const BasicVar<Scalar>& v) -> Matrix {
    return tape.grad(v).template cast<double>();
  });
}

inline ModelParams zeros_like(const ModelParams& p) {
  return map_model<Matrix>(p, [](const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()).eval(); });
}

inline std::vector<Matrix*> arrays(ModelParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

inline std::vector<const Matrix*> arrays(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const Matrix* m : arrays(p)) n += static_cast<std::size_t>(m->size());
  return n;
}

}  // namespace csmlgcn
