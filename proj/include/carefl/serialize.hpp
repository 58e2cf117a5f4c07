#pragma once

#include <string>

#include "carefl/flow.hpp"

namespace carefl {

// Self-describing JSON document: layout, architecture, base, scaler and every
// parameter as decimal arrays. Doubles are written in shortest round-trip
// form, so model_from_json(model_to_json(m)) reproduces m exactly.
std::string model_to_json(const FlowModel& model, int indent = -1);
FlowModel model_from_json(const std::string& text);

void save_model(const FlowModel& model, const std::string& path);
FlowModel load_model(const std::string& path);

}  // namespace carefl
