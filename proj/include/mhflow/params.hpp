#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mhflow/check.hpp"
#include "mhflow/mat.hpp"

namespace mhflow {

struct ParamView {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

// Flat parameter storage with named matrix views. Views tile the flat
// vector exactly, in registration order, which gives a stable layout
// for optimizers, finite differences and checkpoints.
class ParamVector {
 public:
  std::size_t add(const std::string& name, std::size_t rows,
                  std::size_t cols) {
    check(find(name) == nullptr, "duplicate parameter view: " + name);
    ParamView v{name, values_.size(), rows, cols};
    views_.push_back(v);
    values_.resize(values_.size() + rows * cols, 0.0);
    return views_.size() - 1;
  }

  const ParamView* find(const std::string& name) const {
    for (const auto& v : views_)
      if (v.name == name) return &v;
    return nullptr;
  }
  const ParamView& view(const std::string& name) const {
    const ParamView* v = find(name);
    check(v != nullptr, "unknown parameter view: " + name);
    return *v;
  }

  Mat get(const std::string& name) const {
    const ParamView& v = view(name);
    Mat m(v.rows, v.cols);
    for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = values_[v.offset + i];
    return m;
  }
  void set(const std::string& name, const Mat& m) {
    const ParamView& v = view(name);
    check(m.rows == v.rows && m.cols == v.cols,
          "shape mismatch writing view " + name + ": got " + shape_str(m));
    for (std::size_t i = 0; i < v.size(); ++i) values_[v.offset + i] = m.data[i];
  }

  double* data(const std::string& name) {
    return values_.data() + view(name).offset;
  }
  const double* data(const std::string& name) const {
    return values_.data() + view(name).offset;
  }

  std::vector<double>& flat() { return values_; }
  const std::vector<double>& flat() const { return values_; }
  const std::vector<ParamView>& views() const { return views_; }
  std::size_t size() const { return values_.size(); }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<double> values_;
  std::vector<ParamView> views_;
};

struct GradRecord {
  double loss = 0.0;
  std::vector<double> grad;
};

}  // namespace mhflow
