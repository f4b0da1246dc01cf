#include "layoutforge/render.hpp"

#include <cstdio>
#include <random>
#include <sstream>

namespace layoutforge {

namespace {

torch::Tensor hat(const torch::Tensor& t) { return torch::relu(1 - torch::abs(t)); }

torch::Tensor coverage(const torch::Tensor& grid, const torch::Tensor& lo, const torch::Tensor& hi) {
  return torch::clamp(torch::minimum(grid - lo, hi - grid) + 1, 0, 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

torch::Tensor render_element_wireframe(const torch::Tensor& geoms, int width, int height) {
  if (width < 1 || height < 1) throw ValidationError("render size must be at least 1x1");
  if (geoms.size(-1) != 4) throw ValidationError("geometry tensor must end in 4 fields");
  const auto opts = torch::TensorOptions().dtype(geoms.scalar_type());
  const auto u = torch::arange(width, opts);
  const auto v = torch::arange(height, opts);

  auto xc = geoms.select(-1, 0).unsqueeze(-1);
  auto yc = geoms.select(-1, 1).unsqueeze(-1);
  auto hw = geoms.select(-1, 2).unsqueeze(-1) / 2;
  auto hh = geoms.select(-1, 3).unsqueeze(-1) / 2;
  auto xl = (xc - hw) * width;
  auto xr = (xc + hw) * width;
  auto yt = (yc - hh) * height;
  auto yb = (yc + hh) * height;

  auto cov_x = coverage(u, xl, xr);  // [...,W]
  auto cov_y = coverage(v, yt, yb);  // [...,H]
  auto top = hat(v - yt).unsqueeze(-1) * cov_x.unsqueeze(-2);
  auto bottom = hat(v - yb).unsqueeze(-1) * cov_x.unsqueeze(-2);
  auto left = cov_y.unsqueeze(-1) * hat(u - xl).unsqueeze(-2);
  auto right = cov_y.unsqueeze(-1) * hat(u - xr).unsqueeze(-2);
  return torch::maximum(torch::maximum(top, bottom), torch::maximum(left, right));
}

torch::Tensor compose_layout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                   int width, int height, const torch::Tensor& element_weights) {
  const bool single = geoms.dim() == 2;
  auto probs = single ? class_probs.unsqueeze(0) : class_probs;
  auto g = single ? geoms.unsqueeze(0) : geoms;
  if (probs.dim() != 3 || g.dim() != 3 || probs.size(0) != g.size(0) || probs.size(1) != g.size(1))
    throw ValidationError("class probabilities and geometries disagree in shape");
  if (element_weights.defined()) {
    auto w = single ? element_weights.unsqueeze(0) : element_weights;
    if (w.sizes() != g.sizes().slice(0, 2))
      throw ValidationError("element weights must have one entry per element");
    probs = probs * w.unsqueeze(-1).to(probs.scalar_type());
  }
  auto frames = render_element_wireframe(g, width, height);  // [B,N,H,W]
  auto weighted = probs.unsqueeze(-1).unsqueeze(-1) * frames.unsqueeze(2);  // [B,N,M,H,W]
  torch::Tensor image;
  if (g.size(1) == 0) {
    image = torch::zeros({g.size(0), probs.size(2), height, width}, g.options());
  } else {
    image = std::get<0>(weighted.max(1));
  }
  return single ? image.squeeze(0) : image;
}

torch::Tensor DropoutMask::as_tensor(torch::ScalarType dtype) const {
  auto t = torch::empty({static_cast<int64_t>(bits.size())}, torch::kFloat64);
  for (std::size_t i = 0; i < bits.size(); ++i) t[static_cast<int64_t>(i)] = bits[i] ? 1.0 : 0.0;
  return t.to(dtype);
}

DropoutMask sample_dropout_mask(int n, double keep_probability, std::uint64_t seed) {
  if (!(keep_probability >= 0.0 && keep_probability <= 1.0))
    throw ValidationError("keep probability must lie in [0,1]");
  if (n < 0) throw ValidationError("mask length must be non-negative");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(keep_probability);
  DropoutMask mask;
  mask.keep_probability = keep_probability;
  mask.bits.resize(static_cast<std::size_t>(n));
  for (auto& bit : mask.bits) bit = keep(rng) ? 1 : 0;
  return mask;
}

torch::Tensor sample_dropout_masks(int64_t batch, int64_t n, double keep_probability,
                                   std::uint64_t seed, torch::ScalarType dtype) {
  auto flat = sample_dropout_mask(static_cast<int>(batch * n), keep_probability, seed);
  return flat.as_tensor(dtype).reshape({batch, n});
}

torch::Tensor compose_dropout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                    const torch::Tensor& mask, int width, int height,
                                    const torch::Tensor& element_weights) {
  if (mask.sizes() != geoms.sizes().slice(0, geoms.dim() - 1))
    throw ValidationError("dropout mask length does not match element count");
  auto weights = element_weights.defined() ? element_weights * mask : mask;
  return compose_layout_image(class_probs, geoms, width, height, weights);
}

torch::Tensor compose_dropout_image(const torch::Tensor& class_probs, const torch::Tensor& geoms,
                                    const DropoutMask& mask, int width, int height) {
  return compose_dropout_image(class_probs, geoms, mask.as_tensor(geoms.scalar_type()), width,
                               height);
}

const std::map<std::string, std::string>& default_palette() {
  static const std::map<std::string, std::string> palette{
      {"logo", "#e6194b"},   {"product_image", "#3cb44b"}, {"headline", "#4363d8"},
      {"button", "#f58231"}, {"offer", "#911eb4"},         {"disclaimer", "#808080"}};
  return palette;
}

std::string export_svg(const Layout& layout, const StyleConfig& style,
                       const ClassRegistry& classes) {
  require_valid(layout, classes);
  static const char* fallback[] = {"#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324"};
  const double cw = layout.canvas.width_px;
  const double ch = layout.canvas.height_px;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << layout.canvas.width_px
      << "\" height=\"" << layout.canvas.height_px << "\" viewBox=\"0 0 " << layout.canvas.width_px
      << " " << layout.canvas.height_px << "\">\n";
  svg << "  <path d=\"M0 0H" << fmt(cw) << "V" << fmt(ch) << "H0Z\" fill=\"" << style.background
      << "\" stroke=\"#cccccc\"/>\n";

  for (int i = 0; i < layout.size(); ++i) {
    const Element& e = layout.elements[static_cast<std::size_t>(i)];
    const int cls = e.class_id();
    const std::string& name = classes.name(cls);
    std::string color;
    if (auto it = style.palette.find(name); it != style.palette.end()) {
      color = it->second;
    } else if (auto dit = default_palette().find(name); dit != default_palette().end()) {
      color = dit->second;
    } else {
      color = fallback[static_cast<std::size_t>(cls) % std::size(fallback)];
    }
    const Corners c = derive_corners(e.geometry);
    const double x = c.xl * cw, y = c.yt * ch, w = e.geometry.w * cw, h = e.geometry.h * ch;

    svg << "  <g id=\"element-" << i << "\" class=\"" << escape_xml(name) << "\">\n";
    svg << "    <rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
        << "\" height=\"" << fmt(h) << "\" fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\""
        << color << "\" stroke-width=\"" << fmt(style.stroke_width) << "\"/>\n";
    if (style.placeholder_content) {
      if (cls == kProductImage || cls == kLogo) {
        svg << "    <path d=\"M" << fmt(x) << " " << fmt(y) << "L" << fmt(x + w) << " " << fmt(y + h)
            << "M" << fmt(x + w) << " " << fmt(y) << "L" << fmt(x) << " " << fmt(y + h)
            << "\" stroke=\"" << color << "\" stroke-opacity=\"0.5\"/>\n";
      } else {
        // Text placeholder: horizontal lines filling the box.
        const double line = std::max(2.0, std::min(h / 3, 14.0));
        svg << "    <path d=\"";
        for (double ly = y + line; ly < y + h - line / 2; ly += line * 1.5) {
          svg << "M" << fmt(x + w * 0.08) << " " << fmt(ly) << "H" << fmt(x + w * 0.92);
        }
        svg << "\" stroke=\"" << color << "\" stroke-opacity=\"0.6\"/>\n";
      }
    }
    if (style.show_labels) {
      svg << "    <text x=\"" << fmt(x + 3) << "\" y=\"" << fmt(y + 12)
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" << color << "\">"
          << escape_xml(name) << "</text>\n";
    }
    if (style.show_orders && e.order) {
      svg << "    <text x=\"" << fmt(x + w - 14) << "\" y=\"" << fmt(y + 14)
          << "\" font-family=\"sans-serif\" font-size=\"12\" font-weight=\"bold\" fill=\"#000000\">"
          << *e.order << "</text>\n";
    }
    svg << "  </g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace layoutforge
