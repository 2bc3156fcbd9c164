#pragma once

#include <json.hpp>

#include "phantom/assume.hpp"
#include "phantom/cfa.hpp"
#include "phantom/collect.hpp"
#include "phantom/compare.hpp"
#include "phantom/efa.hpp"
#include "phantom/pipeline.hpp"

namespace phantom {

using Json = nlohmann::ordered_json;

/// Assumption report laid out as check rows with "+", "x" or "NA".
Json to_json(const assume::AssumptionReport& report);
Json to_json(const efa::FactorSolution& solution, const std::vector<std::string>& items);
Json to_json(const efa::FactorGraph& graph);
Json to_json(const efa::CongruenceResult& congruence);
/// Fit indices appear under "fit" only for proper solutions; otherwise they
/// are moved to "suppressed_fit".
Json to_json(const cfa::CfaFit& fit, const cfa::CfaModel& model);
Json to_json(const compare::DescriptivesTable& table);
Json to_json(const compare::CorrelationTable& table);
Json to_json(const pipeline::Verdict& verdict);
Json to_json(const pipeline::SweepStudy& study);
Json to_json(const collect::RawCompletion& raw);

}  // namespace phantom
