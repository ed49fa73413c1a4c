#pragma once

#include <map>
#include <string>

#include "fringelab/nn.hpp"

namespace fringelab {

// Parameter checkpoint, magic "LDW1": for each named parameter, u32 LE name
// length, UTF-8 name, u32 rank, u32 dims, then 32-bit floats row-major.
void save_ldw(const std::string& path, const nn::ParamList& params);

struct LdwEntry {
    Shape shape;
    std::vector<double> data;
};
std::map<std::string, LdwEntry> read_ldw(const std::string& path);

// Loads into an existing parameter list; every model parameter must be
// present with a matching shape and no extra entries may remain.
void load_ldw(const std::string& path, nn::ParamList& params);

// Training state for exact resume, magic "LDT1": step count, optimizer
// hyperparameters, RNG state, then per parameter name + shape + f64 value,
// first moment, second moment.
void save_train_state(const std::string& path, const nn::Adam& opt, const std::string& rng_state,
                      int64_t step);
struct TrainState {
    int64_t step = 0;
    std::string rng_state;
};
TrainState load_train_state(const std::string& path, nn::Adam& opt);

}  // namespace fringelab
