#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "csst/dataset.hpp"
#include "csst/encoders.hpp"
#include "csst/graph.hpp"
#include "csst/params.hpp"
#include "csst/rng.hpp"

namespace csst::testing {

// Central finite differences of f with respect to every entry of params[name].
inline Tensor fd_gradient(const std::function<double(const ParamStore&)>& f, ParamStore params,
                          const std::string& name, double h = 1e-5) {
  Tensor g(params.at(name).shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double& x = params.at(name)[i];
    const double x0 = x;
    x = x0 + h;
    const double up = f(params);
    x = x0 - h;
    const double down = f(params);
    x = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||b||, floor).
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal() * scale;
  return t;
}

inline Poi make_poi(std::string id, double lon, double lat, double area = 100.0) {
  Poi p;
  p.id = std::move(id);
  p.lon = lon;
  p.lat = lat;
  p.attributes = {area, 1.0};
  p.portrait = {0.2, 0.2, 0.2, 0.2, 0.2, 0.5, 0.5};
  p.reports = {1.0, 2.0};
  return p;
}

// Small synthetic city for fast tests.
inline SynthConfig small_city(std::size_t n = 200, std::size_t labeled = 60, std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_pois = n;
  c.n_labeled = labeled;
  c.extent_km = 5.0;
  c.seed = seed;
  return c;
}

inline BackboneConfig backbone_for(const Dataset& ds, Variant v, std::size_t hidden = 32) {
  BackboneConfig b;
  b.variant = v;
  b.hidden = hidden;
  b.attr_dim = ds.pois.front().attributes.size();
  b.portrait_dim = ds.layout.size();
  b.report_dim = ds.intervals;
  return b;
}

}  // namespace csst::testing
