#pragma once

// JSON encodings shared by the event log, the gateway payloads and replay.

#include "json.hpp"

#include "skylane/conflict.hpp"
#include "skylane/plans.hpp"
#include "skylane/resolver.hpp"
#include "skylane/state.hpp"
#include "skylane/twin.hpp"

namespace skylane {

using Json = nlohmann::json;

void to_json(Json& j, const Vec2& v);
void from_json(const Json& j, Vec2& v);

void to_json(Json& j, const Condition& c);
void from_json(const Json& j, Condition& c);

void to_json(Json& j, const Action& a);
void from_json(const Json& j, Action& a);

void to_json(Json& j, const PlannedAction& pa);
void from_json(const Json& j, PlannedAction& pa);

void to_json(Json& j, const FlightPlan& fp);
void from_json(const Json& j, FlightPlan& fp);

void to_json(Json& j, const AxisConstraint& c);
void from_json(const Json& j, AxisConstraint& c);

void to_json(Json& j, const AxisFootprint& f);
void to_json(Json& j, const InterventionRecord& r);
void to_json(Json& j, const AirspacePlan& p);

void to_json(Json& j, const AircraftState& s);
void to_json(Json& j, const RolloutSource& s);
void to_json(Json& j, const ConflictRecord& r);
void to_json(Json& j, const TechnicalSafetyRecord& t);
void to_json(Json& j, const TraceNode& n);
void to_json(Json& j, const DecisionTrace& t);
void to_json(Json& j, const SearchStats& s);
void to_json(Json& j, const Alert& a);

}  // namespace skylane
