#include "vtok/tensor.hpp"

namespace vtok {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return s.empty() ? 0 : n;
}

}  // namespace vtok
