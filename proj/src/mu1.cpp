#include "btsumm/mu1.hpp"

// Template instantiations live in headers; this TU anchors the module.
namespace btsumm {

template struct Mu1Model<float>;
template struct Mu1Model<double>;

}  // namespace btsumm
