#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "qmeas/classicality.hpp"
#include "qmeas/entropy.hpp"
#include "qmeas/measurement.hpp"

namespace qmeas {

using Json = nlohmann::ordered_json;

// JSON conventions: schema tag "qmeas/1" on value objects, "qmeas-report/1"
// on conservation reports, "qmeas-cert/1" on certificates; complex numbers as
// [re, im]; matrices row-major. Serialization is deterministic: same inputs,
// same bytes.
Json to_json(const Label& label);
Json to_json(const OutcomeGrid& grid);
Json to_json(const Distribution& dist);
Json to_json(const Operator& op);
Json to_json(const ConservationReport& report, std::size_t max_rows = 0);
Json to_json(const ShannonBalance& balance);
Json to_json(const ClassicalityCertificate& cert, std::size_t max_table = 64);

std::string csv_escape(const std::string& field);

}  // namespace qmeas
