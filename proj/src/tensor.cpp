#include "qsonn/tensor.hpp"

#include <sstream>

namespace qsonn {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void KernelSpec::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || stride < 1 || dilation < 1) {
    throw ShapeError("kernel extents, stride and dilation must be >= 1");
  }
}

static std::size_t conv_out(std::size_t in, std::size_t k, const KernelSpec& s) {
  const std::size_t padded = in + 2 * s.pad;
  const std::size_t span = s.dilation * (k - 1) + 1;
  if (padded < span) {
    throw ShapeError("kernel span " + std::to_string(span) +
                     " exceeds padded input extent " + std::to_string(padded));
  }
  return (padded - span) / s.stride + 1;
}

std::size_t KernelSpec::out_h(std::size_t in_h) const {
  validate();
  return conv_out(in_h, kernel_h, *this);
}

std::size_t KernelSpec::out_w(std::size_t in_w) const {
  validate();
  return conv_out(in_w, kernel_w, *this);
}

}  // namespace qsonn
