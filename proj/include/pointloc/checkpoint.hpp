#ifndef POINTLOC_CHECKPOINT_HPP_
#define POINTLOC_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "pointloc/model.hpp"

namespace pointloc {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Binary container: magic "PLOC", format version u32, record count u32, then
/// per record: name length u32, name bytes, rank u32, dims u32 each, and the
/// float64 payload. All integers and floats little-endian. Round trips are
/// bit-exact.
void write_records(const std::string& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_records(const std::string& path);

/// Model parameters as records in registration order (beta/gamma included).
void save_params(const std::string& path, const ModelParams& params,
                 const std::vector<NamedTensor>& extra = {});

/// Loads records whose names match params (shape-checked); records outside
/// the parameter set are returned for the caller (e.g. optimizer state).
std::vector<NamedTensor> load_params(const std::string& path, ModelParams& params);

}  // namespace pointloc

#endif  // POINTLOC_CHECKPOINT_HPP_
